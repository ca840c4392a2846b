//! Difference constraints over natural-number stages, solved as a
//! longest-path problem with Bellman-Ford.

use std::fmt;

use serde::Serialize;

pub type VarId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum StageTerm {
    Const(u32),
    /// `var + offset`
    Var(VarId, u32),
}

impl StageTerm {
    pub fn var(v: VarId) -> Self {
        StageTerm::Var(v, 0)
    }

    pub fn plus(self, k: u32) -> Self {
        match self {
            StageTerm::Const(c) => StageTerm::Const(c + k),
            StageTerm::Var(v, o) => StageTerm::Var(v, o + k),
        }
    }

    pub fn eval(self, assignment: &[u32]) -> u32 {
        match self {
            StageTerm::Const(c) => c,
            StageTerm::Var(v, o) => assignment[v] + o,
        }
    }

    pub fn as_const(self) -> Option<u32> {
        match self {
            StageTerm::Const(c) => Some(c),
            StageTerm::Var(..) => None,
        }
    }

    /// Replaces variables through `f`, keeping offsets.
    pub fn subst(self, f: &impl Fn(VarId) -> StageTerm) -> StageTerm {
        match self {
            StageTerm::Const(_) => self,
            StageTerm::Var(v, o) => f(v).plus(o),
        }
    }
}

impl fmt::Display for StageTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageTerm::Const(c) => write!(f, "{c}"),
            StageTerm::Var(v, 0) => write!(f, "e{v}"),
            StageTerm::Var(v, o) => write!(f, "e{v}+{o}"),
        }
    }
}

/// `lhs <= rhs`, tagged with diagnostic data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Constraint<O> {
    pub lhs: StageTerm,
    pub rhs: StageTerm,
    pub origin: O,
}

impl<O> Constraint<O> {
    pub fn new(lhs: StageTerm, rhs: StageTerm, origin: O) -> Self {
        Constraint { lhs, rhs, origin }
    }
}

impl<O> fmt::Display for Constraint<O> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <= {}", self.lhs, self.rhs)
    }
}

/// Indices (into the constraint slice) of a contradictory cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unsatisfiable {
    pub cycle: Vec<usize>,
}

struct Edge {
    from: usize,
    to: usize,
    weight: i64,
    constraint: Option<usize>,
}

/// Least assignment of naturals to `num_vars` variables satisfying every
/// constraint, or a positive-weight cycle witnessing infeasibility.
pub fn solve_constraints<O>(
    num_vars: usize,
    constraints: &[Constraint<O>],
) -> Result<Vec<u32>, Unsatisfiable> {
    // Node 0 is the constant zero; variable v is node v + 1.
    const ZERO: usize = 0;
    let n = num_vars + 1;
    let mut edges: Vec<Edge> = (0..num_vars)
        .map(|v| Edge {
            from: ZERO,
            to: v + 1,
            weight: 0,
            constraint: None,
        })
        .collect();
    for (i, c) in constraints.iter().enumerate() {
        let (from, p) = match c.lhs {
            StageTerm::Const(k) => (ZERO, k as i64),
            StageTerm::Var(v, o) => (v + 1, o as i64),
        };
        let (to, q) = match c.rhs {
            StageTerm::Const(k) => (ZERO, -(k as i64)),
            StageTerm::Var(v, o) => (v + 1, o as i64),
        };
        if from == ZERO && to == ZERO {
            if p + q > 0 {
                return Err(Unsatisfiable { cycle: vec![i] });
            }
            continue;
        }
        // rhs_node >= lhs_node + p - q
        let weight = match c.rhs {
            StageTerm::Const(_) => p + q,
            StageTerm::Var(..) => p - q,
        };
        edges.push(Edge {
            from,
            to,
            weight,
            constraint: Some(i),
        });
    }

    let mut dist = vec![i64::MIN; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    dist[ZERO] = 0;
    let mut last_relaxed = None;
    for _ in 0..n {
        last_relaxed = None;
        for (ei, e) in edges.iter().enumerate() {
            if dist[e.from] == i64::MIN {
                continue;
            }
            let cand = dist[e.from] + e.weight;
            if cand > dist[e.to] {
                dist[e.to] = cand;
                pred[e.to] = Some(ei);
                last_relaxed = Some(e.to);
            }
        }
        if last_relaxed.is_none() {
            break;
        }
    }

    if let Some(mut v) = last_relaxed {
        // Walk back far enough to be certain we are on the cycle.
        for _ in 0..n {
            v = edges[pred[v].expect("relaxed node has a predecessor")].from;
        }
        let start = v;
        let mut cycle = Vec::new();
        loop {
            let e = &edges[pred[v].unwrap()];
            if let Some(c) = e.constraint {
                cycle.push(c);
            }
            v = e.from;
            if v == start {
                break;
            }
        }
        cycle.reverse();
        return Err(Unsatisfiable { cycle });
    }
    if dist[ZERO] > 0 {
        unreachable!("zero node relaxed without a detected cycle");
    }
    Ok(dist[1..].iter().map(|&d| d as u32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(lhs: StageTerm, rhs: StageTerm) -> Constraint<()> {
        Constraint::new(lhs, rhs, ())
    }

    fn satisfies(a: &[u32], cs: &[Constraint<()>]) -> bool {
        cs.iter().all(|c| c.lhs.eval(a) <= c.rhs.eval(a))
    }

    #[test]
    fn mutual_le_is_zero() {
        let x = StageTerm::var(0);
        let y = StageTerm::var(1);
        assert_eq!(solve_constraints(2, &[c(x, y), c(y, x)]).unwrap(), vec![0, 0]);
    }

    #[test]
    fn successor_cycle_is_unsatisfiable() {
        let x = StageTerm::var(0);
        let y = StageTerm::var(1);
        let err = solve_constraints(2, &[c(x.plus(1), y), c(y.plus(1), x)]).unwrap_err();
        let mut cyc = err.cycle.clone();
        cyc.sort();
        assert_eq!(cyc, vec![0, 1]);
    }

    #[test]
    fn constants_bound_from_both_sides() {
        let x = StageTerm::var(0);
        assert_eq!(
            solve_constraints(1, &[c(StageTerm::Const(3), x)]).unwrap(),
            vec![3]
        );
        let err = solve_constraints(1, &[c(StageTerm::Const(3), x), c(x, StageTerm::Const(2))])
            .unwrap_err();
        assert_eq!(err.cycle.len(), 2);
        assert!(solve_constraints::<()>(0, &[c(StageTerm::Const(2), StageTerm::Const(1))]).is_err());
    }

    #[test]
    fn ordered_pair_of_arrays() {
        // entry <= x, x + 1 <= y: the shape inferred for `f(x, y)` accessing x then y.
        let (e, x, y) = (StageTerm::var(0), StageTerm::var(1), StageTerm::var(2));
        let cs = [c(e, x), c(x.plus(1), y)];
        let a = solve_constraints(3, &cs).unwrap();
        assert!(a[1] < a[2]);
        // Binding x = 1, y = 0 is contradictory.
        let mut bound = cs.to_vec();
        bound.push(c(x, StageTerm::Const(1)));
        bound.push(c(StageTerm::Const(1), x));
        bound.push(c(y, StageTerm::Const(0)));
        assert!(solve_constraints(3, &bound).is_err());
    }

    #[test]
    fn least_solution_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let n = rng.gen_range(1..4);
            let term = |rng: &mut rand_chacha::ChaCha8Rng| {
                if rng.gen_bool(0.25) {
                    StageTerm::Const(rng.gen_range(0..4))
                } else {
                    StageTerm::Var(rng.gen_range(0..n), rng.gen_range(0..2))
                }
            };
            let cs: Vec<_> = (0..rng.gen_range(0..5))
                .map(|_| c(term(&mut rng), term(&mut rng)))
                .collect();
            // Any solution in range can be shifted into [0, 12).
            let mut best: Option<Vec<u32>> = None;
            let total = 12u32.pow(n as u32);
            for code in 0..total {
                let a: Vec<u32> = (0..n).map(|i| code / 12u32.pow(i as u32) % 12).collect();
                if satisfies(&a, &cs) {
                    best = Some(match best {
                        None => a,
                        Some(b) => b.iter().zip(&a).map(|(x, y)| *x.min(y)).collect(),
                    });
                }
            }
            match solve_constraints(n, &cs) {
                Ok(a) => {
                    assert!(satisfies(&a, &cs));
                    assert_eq!(Some(a), best);
                }
                Err(u) => {
                    assert!(best.is_none(), "{cs:?}");
                    assert!(!u.cycle.is_empty());
                }
            }
        }
    }
}
