//! Suffix array construction by induced sorting (SA-IS).
//!
//! Suffixes compare bytewise, with a proper prefix ordered before any longer
//! string. Small inputs fall back to a direct comparison sort.

const NAIVE_THRESHOLD: usize = 16;
const EMPTY: usize = usize::MAX;

trait Symbol: Copy + Ord {
    fn rank(self) -> usize;
}

impl Symbol for u8 {
    fn rank(self) -> usize {
        self as usize
    }
}

impl Symbol for usize {
    fn rank(self) -> usize {
        self
    }
}

/// Suffix array of `text`.
pub fn suffix_array(text: &[u8]) -> Vec<usize> {
    sa_is(text, 255)
}

fn sa_naive<T: Symbol>(s: &[T]) -> Vec<usize> {
    let mut sa: Vec<usize> = (0..s.len()).collect();
    sa.sort_by(|&a, &b| s[a..].cmp(&s[b..]));
    sa
}

/// `upper` is the largest symbol rank occurring in `s`.
fn sa_is<T: Symbol>(s: &[T], upper: usize) -> Vec<usize> {
    let n = s.len();
    if n < NAIVE_THRESHOLD {
        return sa_naive(s);
    }

    // is_s[i]: suffix i is S-type (smaller than suffix i + 1)
    let mut is_s = vec![false; n];
    for i in (0..n - 1).rev() {
        is_s[i] = match s[i].cmp(&s[i + 1]) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => is_s[i + 1],
        };
    }

    // sum_l[c]: start of bucket c; sum_s[c]: start of the S part of bucket c
    let mut sum_l = vec![0usize; upper + 2];
    let mut sum_s = vec![0usize; upper + 2];
    for i in 0..n {
        if is_s[i] {
            sum_l[s[i].rank() + 1] += 1;
        } else {
            sum_s[s[i].rank()] += 1;
        }
    }
    for c in 0..=upper {
        sum_s[c] += sum_l[c];
        sum_l[c + 1] += sum_s[c];
    }

    let is_lms = |i: usize| i > 0 && !is_s[i - 1] && is_s[i];

    let mut sa = vec![EMPTY; n];
    let mut buf = vec![0usize; upper + 2];
    let mut induce = |sa: &mut [usize], lms: &[usize]| {
        sa.fill(EMPTY);
        buf.copy_from_slice(&sum_s);
        for &d in lms {
            let c = s[d].rank();
            sa[buf[c]] = d;
            buf[c] += 1;
        }
        buf.copy_from_slice(&sum_l);
        let c = s[n - 1].rank();
        sa[buf[c]] = n - 1;
        buf[c] += 1;
        for i in 0..n {
            let v = sa[i];
            if v != EMPTY && v >= 1 && !is_s[v - 1] {
                let c = s[v - 1].rank();
                sa[buf[c]] = v - 1;
                buf[c] += 1;
            }
        }
        buf.copy_from_slice(&sum_l);
        for i in (0..n).rev() {
            let v = sa[i];
            if v != EMPTY && v >= 1 && is_s[v - 1] {
                let c = s[v - 1].rank() + 1;
                buf[c] -= 1;
                sa[buf[c]] = v - 1;
            }
        }
    };

    let mut lms_map = vec![EMPTY; n + 1];
    let mut lms = Vec::new();
    for (i, slot) in lms_map.iter_mut().enumerate().take(n).skip(1) {
        if is_lms(i) {
            *slot = lms.len();
            lms.push(i);
        }
    }
    let m = lms.len();

    induce(&mut sa, &lms);

    if m > 0 {
        let mut sorted_lms: Vec<usize> = sa
            .iter()
            .copied()
            .filter(|&v| v != EMPTY && lms_map[v] != EMPTY)
            .collect();
        // name LMS substrings; equal substrings share a name
        let mut rec_s = vec![0usize; m];
        let mut rec_upper = 0usize;
        rec_s[lms_map[sorted_lms[0]]] = 0;
        for w in 1..m {
            let (mut l, mut r) = (sorted_lms[w - 1], sorted_lms[w]);
            let end_l = if lms_map[l] + 1 < m { lms[lms_map[l] + 1] } else { n };
            let end_r = if lms_map[r] + 1 < m { lms[lms_map[r] + 1] } else { n };
            let mut same = true;
            if end_l - l != end_r - r {
                same = false;
            } else {
                while l < end_l {
                    if s[l] != s[r] {
                        break;
                    }
                    l += 1;
                    r += 1;
                }
                if l == n || s[l] != s[r] {
                    same = false;
                }
            }
            if !same {
                rec_upper += 1;
            }
            rec_s[lms_map[sorted_lms[w]]] = rec_upper;
        }

        let rec_sa = sa_is(&rec_s, rec_upper);
        for (slot, &r) in sorted_lms.iter_mut().zip(&rec_sa) {
            *slot = lms[r];
        }
        induce(&mut sa, &sorted_lms);
    }
    sa
}
