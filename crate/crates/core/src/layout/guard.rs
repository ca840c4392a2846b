//! Guards as unions of boxes over variable domains.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::frontend::resolve::mask;
use crate::lower::Test;
use crate::memop::CmpOp;

/// Sorted, disjoint, non-adjacent closed intervals.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct IntervalSet(pub Vec<(u64, u64)>);

impl IntervalSet {
    pub fn full(width: u32) -> Self {
        IntervalSet(vec![(0, mask(width))])
    }

    pub fn empty() -> Self {
        IntervalSet(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_full(&self, width: u32) -> bool {
        self.0 == [(0, mask(width))]
    }

    pub fn contains(&self, v: u64) -> bool {
        self.0.iter().any(|&(a, b)| a <= v && v <= b)
    }

    fn normalize(mut v: Vec<(u64, u64)>) -> Self {
        v.retain(|(a, b)| a <= b);
        v.sort();
        let mut out: Vec<(u64, u64)> = Vec::new();
        for (a, b) in v {
            match out.last_mut() {
                Some(last) if a <= last.1.saturating_add(1) => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        IntervalSet(out)
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        for &(a, b) in &self.0 {
            for &(c, d) in &other.0 {
                let (lo, hi) = (a.max(c), b.min(d));
                if lo <= hi {
                    out.push((lo, hi));
                }
            }
        }
        IntervalSet::normalize(out)
    }

    /// Values of a `width`-bit variable satisfying `test`.
    pub fn from_test(t: &Test, width: u32) -> IntervalSet {
        let max = mask(width);
        if !t.signed {
            let k = t.value;
            let v = match t.cmp {
                CmpOp::Eq => vec![(k, k)],
                CmpOp::Ne if k == 0 => vec![(1, max)],
                CmpOp::Ne => vec![(0, k - 1), (k + 1, max)],
                CmpOp::Lt if k == 0 => vec![],
                CmpOp::Lt => vec![(0, k - 1)],
                CmpOp::Le => vec![(0, k)],
                CmpOp::Gt => vec![(k.saturating_add(1), max)],
                CmpOp::Ge => vec![(k, max)],
            };
            let v = v.into_iter().filter(|&(a, _)| a <= max).map(|(a, b)| (a, b.min(max))).collect();
            return IntervalSet::normalize(v);
        }
        let half = 1i128 << (width - 1);
        let (lo, hi) = (-half, half - 1);
        let shift = 64 - width;
        let k = (((t.value << shift) as i64) >> shift) as i128;
        let signed: Vec<(i128, i128)> = match t.cmp {
            CmpOp::Eq => vec![(k, k)],
            CmpOp::Ne => vec![(lo, k - 1), (k + 1, hi)],
            CmpOp::Lt => vec![(lo, k - 1)],
            CmpOp::Le => vec![(lo, k)],
            CmpOp::Gt => vec![(k + 1, hi)],
            CmpOp::Ge => vec![(k, hi)],
        };
        let modulus = 1i128 << width;
        let mut out = Vec::new();
        for (a, b) in signed {
            let (a, b) = (a.max(lo), b.min(hi));
            if a > b {
                continue;
            }
            if a < 0 {
                out.push(((a + modulus) as u64, (b.min(-1) + modulus) as u64));
            }
            if b >= 0 {
                out.push((a.max(0) as u64, b as u64));
            }
        }
        IntervalSet::normalize(out)
    }
}

/// Conjunction: each variable constrained to a set; absent means any value.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Conj(pub BTreeMap<String, IntervalSet>);

impl Conj {
    /// Adds a constraint; returns false when the conjunction becomes
    /// unsatisfiable.
    pub fn and(&mut self, var: &str, set: IntervalSet, width: u32) -> bool {
        let cur = self
            .0
            .remove(var)
            .unwrap_or_else(|| IntervalSet::full(width));
        let next = cur.intersect(&set);
        let empty = next.is_empty();
        if !next.is_full(width) {
            self.0.insert(var.to_string(), next);
        }
        !empty
    }

    pub fn holds(&self, value: impl Fn(&str) -> u64) -> bool {
        self.0.iter().all(|(v, s)| s.contains(value(v)))
    }

    /// Every combination of one interval per variable.
    pub fn boxes(&self) -> Vec<BTreeMap<String, (u64, u64)>> {
        let mut out = vec![BTreeMap::new()];
        for (v, s) in &self.0 {
            let mut next = Vec::new();
            for b in &out {
                for &iv in &s.0 {
                    let mut nb = b.clone();
                    nb.insert(v.clone(), iv);
                    next.push(nb);
                }
            }
            out = next;
        }
        out
    }

    pub fn box_count(&self) -> usize {
        self.0.values().map(|s| s.0.len()).product()
    }
}

/// Disjunction of conjunctions; `[Conj::default()]` is true, `[]` is false.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Guard(pub Vec<Conj>);

impl Guard {
    pub fn always() -> Self {
        Guard(vec![Conj::default()])
    }

    pub fn is_true(&self) -> bool {
        self.0.iter().any(|c| c.0.is_empty())
    }

    pub fn is_false(&self) -> bool {
        self.0.is_empty()
    }

    /// Sorts and deduplicates the disjuncts; a true disjunct absorbs the rest.
    pub fn canonical(mut self) -> Self {
        if self.is_true() {
            return Guard::always();
        }
        self.0.sort();
        self.0.dedup();
        self
    }

    pub fn vars(&self) -> impl Iterator<Item = &String> {
        self.0.iter().flat_map(|c| c.0.keys())
    }

    pub fn holds(&self, value: impl Fn(&str) -> u64 + Copy) -> bool {
        self.0.iter().any(|c| c.holds(value))
    }

    pub fn box_count(&self) -> usize {
        self.0.iter().map(Conj::box_count).sum()
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_true() {
            return f.write_str("true");
        }
        if self.is_false() {
            return f.write_str("false");
        }
        let conj: Vec<String> = self
            .0
            .iter()
            .map(|c| {
                let lits: Vec<String> = c
                    .0
                    .iter()
                    .map(|(v, s)| {
                        let ivs: Vec<String> = s
                            .0
                            .iter()
                            .map(|&(a, b)| if a == b { a.to_string() } else { format!("{a}..{b}") })
                            .collect();
                        format!("{v} in {{{}}}", ivs.join(", "))
                    })
                    .collect();
                lits.join(" && ")
            })
            .collect();
        f.write_str(&conj.join(" || "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test(cmp: CmpOp, value: u64, signed: bool) -> Test {
        Test {
            var: "x".into(),
            cmp,
            value,
            signed,
            label: None,
        }
    }

    #[test]
    fn every_literal_matches_its_test_on_six_bits() {
        let cmps = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge];
        for signed in [false, true] {
            for cmp in cmps {
                for k in 0..64 {
                    let t = test(cmp, k, signed);
                    let s = IntervalSet::from_test(&t, 6);
                    for v in 0..64 {
                        assert_eq!(s.contains(v), t.eval(v, 6), "{t} at {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn contradiction_is_detected() {
        let mut c = Conj::default();
        assert!(c.and("p", IntervalSet::from_test(&test(CmpOp::Eq, 6, false), 8), 8));
        assert!(!c.and("p", IntervalSet::from_test(&test(CmpOp::Ne, 6, false), 8), 8));
    }

    #[test]
    fn two_disequalities_give_three_boxes() {
        let mut c = Conj::default();
        c.and("p", IntervalSet::from_test(&test(CmpOp::Ne, 6, false), 8), 8);
        c.and("p", IntervalSet::from_test(&test(CmpOp::Ne, 17, false), 8), 8);
        assert_eq!(c.box_count(), 3);
        assert_eq!(c.boxes().len(), 3);
    }

    #[test]
    fn full_literal_is_dropped() {
        let mut c = Conj::default();
        c.and("p", IntervalSet::from_test(&test(CmpOp::Ge, 0, false), 8), 8);
        assert!(c.0.is_empty());
    }
}
