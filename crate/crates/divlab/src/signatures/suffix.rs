//! Generalized suffix array over a document population, with the
//! LCP-interval traversal that enumerates every maximal shared
//! substring. Built for populations of tens of documents up to a few
//! hundred KiB each; construction is prefix doubling (parallel sort when
//! the `parallel` feature is on), LCP is Kasai's algorithm, and document
//! support sets are 64-bit masks combined through an OR segment tree.

use crate::exec;

/// Sentinel-separated concatenation: document bytes map to 0..=255 and
/// document `k` ends with the unique symbol `256 + k`, so no shared
/// prefix ever crosses a document boundary.
pub(crate) struct SuffixData {
    text: Vec<u32>,
    sa: Vec<u32>,
    lcp: Vec<u32>,
    doc_of: Vec<u32>,
    doc_start: Vec<u32>,
}

/// One maximal repeat: a substring that cannot be extended left or right
/// without losing a supporting document.
pub(crate) struct MaximalRepeat {
    pub bytes: Vec<u8>,
    pub support_mask: u64,
    /// (document, offset) of every occurrence, sorted.
    pub occurrences: Vec<(usize, usize)>,
}

impl SuffixData {
    pub(crate) fn new(docs: &[&[u8]]) -> SuffixData {
        assert!(docs.len() <= 64, "document masks are 64-bit");
        let total: usize = docs.iter().map(|d| d.len() + 1).sum();
        let mut text = Vec::with_capacity(total);
        let mut doc_of = Vec::with_capacity(total);
        let mut doc_start = Vec::with_capacity(docs.len());
        for (k, doc) in docs.iter().enumerate() {
            doc_start.push(text.len() as u32);
            text.extend(doc.iter().map(|&b| u32::from(b)));
            text.push(256 + k as u32);
            doc_of.extend(std::iter::repeat_n(k as u32, doc.len() + 1));
        }

        let sa = build_suffix_array(&text);
        let lcp = kasai_lcp(&text, &sa);
        SuffixData {
            text,
            sa,
            lcp,
            doc_of,
            doc_start,
        }
    }

    /// Every maximal repeat of length >= min_len supported by >=
    /// quorum distinct documents.
    pub(crate) fn maximal_repeats(&self, min_len: usize, quorum: usize) -> Vec<MaximalRepeat> {
        let n = self.sa.len();
        let doc_bits: Vec<u64> = self
            .sa
            .iter()
            .map(|&p| 1u64 << self.doc_of[p as usize])
            .collect();
        let or_tree = OrTree::new(&doc_bits);

        struct Node {
            depth: u32,
            lb: usize,
            boundaries: Vec<usize>,
        }

        let mut out = Vec::new();
        let mut visit = |node: &Node, rb: usize| {
            let depth = node.depth as usize;
            if depth < min_len {
                return;
            }
            let mask = or_tree.query(node.lb, rb);
            if (mask.count_ones() as usize) < quorum {
                return;
            }
            // Right-maximality: no child reached by a real byte may keep
            // the full support.
            let mut bounds = Vec::with_capacity(node.boundaries.len() + 2);
            bounds.push(node.lb);
            bounds.extend_from_slice(&node.boundaries);
            bounds.push(rb);
            for w in bounds.windows(2) {
                let (s, e) = (w[0], w[1]);
                let first = self.text[self.sa[s] as usize + depth];
                if first > 255 {
                    continue;
                }
                let child_mask = if e - s == 1 {
                    doc_bits[s]
                } else {
                    or_tree.query(s, e)
                };
                if child_mask == mask {
                    return;
                }
            }
            // Left-maximality over the actual occurrences.
            let mut prev_masks = [0u64; 256];
            let mut occurrences = Vec::with_capacity(rb - node.lb);
            for &p in &self.sa[node.lb..rb] {
                let doc = self.doc_of[p as usize] as usize;
                let start = self.doc_start[doc];
                occurrences.push((doc, (p - start) as usize));
                if p > start {
                    let prev = self.text[p as usize - 1];
                    debug_assert!(prev <= 255);
                    prev_masks[prev as usize] |= 1 << doc;
                }
            }
            if prev_masks.contains(&mask) {
                return;
            }
            occurrences.sort_unstable();
            let at = self.sa[node.lb] as usize;
            let bytes = self.text[at..at + depth].iter().map(|&c| c as u8).collect();
            out.push(MaximalRepeat {
                bytes,
                support_mask: mask,
                occurrences,
            });
        };

        // Bottom-up LCP-interval traversal.
        let mut stack: Vec<Node> = vec![Node {
            depth: 0,
            lb: 0,
            boundaries: Vec::new(),
        }];
        for pos in 1..=n {
            let l = if pos < n { self.lcp[pos] } else { 0 };
            let mut last_lb = pos - 1;
            while stack.last().expect("root stays").depth > l {
                let node = stack.pop().expect("checked");
                last_lb = node.lb;
                visit(&node, pos);
            }
            let top = stack.last_mut().expect("root stays");
            match top.depth.cmp(&l) {
                std::cmp::Ordering::Equal => top.boundaries.push(pos),
                std::cmp::Ordering::Less => stack.push(Node {
                    depth: l,
                    lb: last_lb,
                    boundaries: vec![pos],
                }),
                std::cmp::Ordering::Greater => unreachable!("stack popped below lcp"),
            }
        }
        debug_assert_eq!(stack.len(), 1);
        out
    }
}

fn build_suffix_array(text: &[u32]) -> Vec<u32> {
    let n = text.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sa: Vec<u32> = (0..n as u32).collect();
    let mut rank: Vec<u64> = text.iter().map(|&c| u64::from(c) + 1).collect();
    let mut k = 1usize;
    loop {
        {
            let key =
                |i: usize| -> (u64, u64) { (rank[i], if i + k < n { rank[i + k] } else { 0 }) };
            exec::sort_by_key(&mut sa, |&i| key(i as usize));
            let mut next = vec![0u64; n];
            let mut r = 1u64;
            next[sa[0] as usize] = r;
            for w in 1..n {
                if key(sa[w] as usize) != key(sa[w - 1] as usize) {
                    r += 1;
                }
                next[sa[w] as usize] = r;
            }
            rank = next;
            if r as usize == n {
                break;
            }
        }
        k *= 2;
    }
    sa
}

fn kasai_lcp(text: &[u32], sa: &[u32]) -> Vec<u32> {
    let n = sa.len();
    let mut inv = vec![0u32; n];
    for (pos, &i) in sa.iter().enumerate() {
        inv[i as usize] = pos as u32;
    }
    let mut lcp = vec![0u32; n];
    let mut h = 0usize;
    for i in 0..n {
        let pos = inv[i] as usize;
        if pos > 0 {
            let j = sa[pos - 1] as usize;
            while i + h < n && j + h < n && text[i + h] == text[j + h] {
                h += 1;
            }
            lcp[pos] = h as u32;
            h = h.saturating_sub(1);
        } else {
            h = 0;
        }
    }
    lcp
}

/// Bitwise-OR segment tree over fixed leaves.
struct OrTree {
    size: usize,
    nodes: Vec<u64>,
}

impl OrTree {
    fn new(leaves: &[u64]) -> OrTree {
        let size = leaves.len().next_power_of_two().max(1);
        let mut nodes = vec![0u64; 2 * size];
        nodes[size..size + leaves.len()].copy_from_slice(leaves);
        for i in (1..size).rev() {
            nodes[i] = nodes[2 * i] | nodes[2 * i + 1];
        }
        OrTree { size, nodes }
    }

    /// OR over the half-open range [l, r).
    fn query(&self, l: usize, r: usize) -> u64 {
        let mut acc = 0u64;
        let mut l = l + self.size;
        let mut r = r + self.size;
        while l < r {
            if l & 1 == 1 {
                acc |= self.nodes[l];
                l += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                acc |= self.nodes[r];
            }
            l /= 2;
            r /= 2;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sa_of(s: &[u8]) -> Vec<u32> {
        build_suffix_array(&s.iter().map(|&b| u32::from(b)).collect::<Vec<_>>())
    }

    #[test]
    fn suffix_array_of_banana() {
        // banana suffixes sorted: a(5) ana(3) anana(1) banana(0) na(4) nana(2)
        assert_eq!(sa_of(b"banana"), vec![5, 3, 1, 0, 4, 2]);
    }

    #[test]
    fn lcp_of_banana() {
        let text: Vec<u32> = b"banana".iter().map(|&b| u32::from(b)).collect();
        let sa = build_suffix_array(&text);
        let lcp = kasai_lcp(&text, &sa);
        assert_eq!(lcp, vec![0, 1, 3, 0, 0, 2]);
    }

    #[test]
    fn or_tree_matches_scan() {
        let leaves: Vec<u64> = (0..37).map(|i| 1u64 << (i % 11)).collect();
        let t = OrTree::new(&leaves);
        for l in 0..leaves.len() {
            for r in l..=leaves.len() {
                let want = leaves[l..r].iter().fold(0, |a, b| a | b);
                assert_eq!(t.query(l, r), want, "[{l}, {r})");
            }
        }
    }

    #[test]
    fn identical_pair_has_one_maximal_repeat() {
        let doc = b"HELLO-WORLD-HELLO";
        let data = SuffixData::new(&[doc, doc]);
        let reps = data.maximal_repeats(1, 2);
        // The whole document is the only substring whose support cannot
        // be kept while extending.
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].bytes, doc.to_vec());
        assert_eq!(reps[0].support_mask, 0b11);
        assert_eq!(reps[0].occurrences, vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn threshold_boundary_example() {
        // 11-byte docs sharing exactly a 10-byte run.
        let a = b"AAAAABBBBBC";
        let b = b"XAAAAABBBBB";
        let data = SuffixData::new(&[a, b]);
        let reps: Vec<_> = data
            .maximal_repeats(10, 2)
            .into_iter()
            .map(|r| r.bytes)
            .collect();
        assert_eq!(reps, vec![b"AAAAABBBBB".to_vec()]);
    }
}
