//! A small ML-style language with staged global references, its typing
//! judgement and a small-step machine. Used as an oracle for type soundness.

use std::fmt;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CoreType {
    Unit,
    Int,
    Ref(Box<CoreType>, u32),
    Arrow {
        input: Box<CoreType>,
        ein: u32,
        output: Box<CoreType>,
        eout: u32,
    },
}

impl fmt::Display for CoreType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreType::Unit => write!(f, "Unit"),
            CoreType::Int => write!(f, "Int"),
            CoreType::Ref(t, i) => write!(f, "ref({t}, {i})"),
            CoreType::Arrow {
                input,
                ein,
                output,
                eout,
            } => write!(f, "({input}, {ein}) -> ({output}, {eout})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoreExpr {
    Unit,
    IntLit(BigInt),
    GlobalRef(u32),
    LocalVar(String),
    Plus(Box<CoreExpr>, Box<CoreExpr>),
    Let(String, Box<CoreExpr>, Box<CoreExpr>),
    Deref(Box<CoreExpr>),
    /// `lhs := rhs`
    Update(Box<CoreExpr>, Box<CoreExpr>),
    Fun {
        param: String,
        ty: CoreType,
        ein: u32,
        body: Box<CoreExpr>,
    },
    App(Box<CoreExpr>, Box<CoreExpr>),
}

impl CoreExpr {
    pub fn int(n: i64) -> Self {
        CoreExpr::IntLit(BigInt::from(n))
    }

    pub fn var(x: &str) -> Self {
        CoreExpr::LocalVar(x.to_string())
    }

    pub fn plus(a: CoreExpr, b: CoreExpr) -> Self {
        CoreExpr::Plus(Box::new(a), Box::new(b))
    }

    pub fn let_in(x: &str, a: CoreExpr, b: CoreExpr) -> Self {
        CoreExpr::Let(x.to_string(), Box::new(a), Box::new(b))
    }

    pub fn deref(a: CoreExpr) -> Self {
        CoreExpr::Deref(Box::new(a))
    }

    pub fn update(lhs: CoreExpr, rhs: CoreExpr) -> Self {
        CoreExpr::Update(Box::new(lhs), Box::new(rhs))
    }

    pub fn fun(param: &str, ty: CoreType, ein: u32, body: CoreExpr) -> Self {
        CoreExpr::Fun {
            param: param.to_string(),
            ty,
            ein,
            body: Box::new(body),
        }
    }

    pub fn app(f: CoreExpr, a: CoreExpr) -> Self {
        CoreExpr::App(Box::new(f), Box::new(a))
    }

    pub fn is_value(&self) -> bool {
        matches!(
            self,
            CoreExpr::Unit | CoreExpr::IntLit(_) | CoreExpr::GlobalRef(_) | CoreExpr::Fun { .. }
        )
    }

    pub fn size(&self) -> usize {
        match self {
            CoreExpr::Unit | CoreExpr::IntLit(_) | CoreExpr::GlobalRef(_) | CoreExpr::LocalVar(_) => 1,
            CoreExpr::Deref(a) => 1 + a.size(),
            CoreExpr::Fun { body, .. } => 1 + body.size(),
            CoreExpr::Plus(a, b)
            | CoreExpr::Let(_, a, b)
            | CoreExpr::Update(a, b)
            | CoreExpr::App(a, b) => 1 + a.size() + b.size(),
        }
    }
}

impl fmt::Display for CoreExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreExpr::Unit => write!(f, "()"),
            CoreExpr::IntLit(n) => write!(f, "{n}"),
            CoreExpr::GlobalRef(i) => write!(f, "g{i}"),
            CoreExpr::LocalVar(x) => write!(f, "{x}"),
            CoreExpr::Plus(a, b) => write!(f, "({a} + {b})"),
            CoreExpr::Let(x, a, b) => write!(f, "(let {x} = {a} in {b})"),
            CoreExpr::Deref(a) => write!(f, "!{a}"),
            CoreExpr::Update(a, b) => write!(f, "({a} := {b})"),
            CoreExpr::Fun {
                param,
                ty,
                ein,
                body,
            } => write!(f, "(fun ({param} : {ty}, {ein}) -> {body})"),
            CoreExpr::App(a, b) => write!(f, "({a} {b})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("type error ({rule}): {message}")]
pub struct CoreTypeError {
    pub rule: &'static str,
    pub message: String,
}

fn terr(rule: &'static str, message: impl Into<String>) -> CoreTypeError {
    CoreTypeError {
        rule,
        message: message.into(),
    }
}

pub type TypeEnv = Vec<(String, CoreType)>;

/// `Γ, stage ⊢ e : τ, exit` with global `i` of type `ref(globals[i], i)`.
pub fn core_typecheck(
    globals: &[CoreType],
    env: &TypeEnv,
    stage: u32,
    e: &CoreExpr,
) -> Result<(CoreType, u32), CoreTypeError> {
    let out = typecheck_inner(globals, env, stage, e)?;
    if e.is_value() {
        assert_eq!(out.1, stage, "typing a value changed the stage");
    }
    Ok(out)
}

fn typecheck_inner(
    globals: &[CoreType],
    env: &TypeEnv,
    stage: u32,
    e: &CoreExpr,
) -> Result<(CoreType, u32), CoreTypeError> {
    match e {
        CoreExpr::Unit => Ok((CoreType::Unit, stage)),
        CoreExpr::IntLit(_) => Ok((CoreType::Int, stage)),
        CoreExpr::GlobalRef(i) => match globals.get(*i as usize) {
            Some(t) => Ok((CoreType::Ref(Box::new(t.clone()), *i), stage)),
            None => Err(terr("global variable", format!("no global g{i}"))),
        },
        CoreExpr::LocalVar(x) => match env.iter().rev().find(|(y, _)| y == x) {
            Some((_, t)) => Ok((t.clone(), stage)),
            None => Err(terr("local variable", format!("unbound variable {x}"))),
        },
        CoreExpr::Plus(a, b) => {
            let (ta, e1) = core_typecheck(globals, env, stage, a)?;
            if ta != CoreType::Int {
                return Err(terr("plus", format!("left operand has type {ta}")));
            }
            let (tb, e2) = core_typecheck(globals, env, e1, b)?;
            if tb != CoreType::Int {
                return Err(terr("plus", format!("right operand has type {tb}")));
            }
            Ok((CoreType::Int, e2))
        }
        CoreExpr::Let(x, a, b) => {
            let (ta, e1) = core_typecheck(globals, env, stage, a)?;
            let mut inner = env.clone();
            inner.push((x.clone(), ta));
            core_typecheck(globals, &inner, e1, b)
        }
        CoreExpr::Deref(a) => {
            let (ta, e2) = core_typecheck(globals, env, stage, a)?;
            let CoreType::Ref(t, e1) = ta else {
                return Err(terr("deref", format!("expected a ref, found {ta}")));
            };
            if e2 > e1 {
                return Err(terr("deref", format!("stage {e2} is past g{e1}")));
            }
            Ok((*t, e1 + 1))
        }
        CoreExpr::Update(lhs, rhs) => {
            let (t, e1) = core_typecheck(globals, env, stage, rhs)?;
            let (tl, e3) = core_typecheck(globals, env, e1, lhs)?;
            let CoreType::Ref(tr, e2) = tl else {
                return Err(terr("update", format!("expected a ref, found {tl}")));
            };
            if *tr != t {
                return Err(terr("update", format!("cannot store {t} in ref({tr}, {e2})")));
            }
            if e3 > e2 {
                return Err(terr("update", format!("stage {e3} is past g{e2}")));
            }
            Ok((CoreType::Unit, e2 + 1))
        }
        CoreExpr::Fun {
            param,
            ty,
            ein,
            body,
        } => {
            let mut inner = env.clone();
            inner.push((param.clone(), ty.clone()));
            let (tout, eout) = core_typecheck(globals, &inner, *ein, body)?;
            Ok((
                CoreType::Arrow {
                    input: Box::new(ty.clone()),
                    ein: *ein,
                    output: Box::new(tout),
                    eout,
                },
                stage,
            ))
        }
        CoreExpr::App(f, a) => {
            let (tf, e1) = core_typecheck(globals, env, stage, f)?;
            let CoreType::Arrow {
                input,
                ein,
                output,
                eout,
            } = tf
            else {
                return Err(terr("app", format!("applying a non-function of type {tf}")));
            };
            let (ta, e2) = core_typecheck(globals, env, e1, a)?;
            if ta != *input {
                return Err(terr("app", format!("argument has type {ta}, expected {input}")));
            }
            if e2 > ein {
                return Err(terr("app", format!("called at stage {e2}, function starts at {ein}")));
            }
            Ok((*output, eout))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineState {
    pub g: Vec<CoreExpr>,
    pub n: u32,
    pub e: CoreExpr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Next(MachineState),
    Finished(CoreExpr),
    Stuck(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalOutcome {
    Finished { value: CoreExpr, state: MachineState },
    Stuck { reason: String, state: MachineState },
    StepBudgetExceeded,
}

pub fn substitute(e: &CoreExpr, x: &str, v: &CoreExpr) -> CoreExpr {
    let s = |e: &CoreExpr| Box::new(substitute(e, x, v));
    match e {
        CoreExpr::LocalVar(y) if y == x => v.clone(),
        CoreExpr::Unit | CoreExpr::IntLit(_) | CoreExpr::GlobalRef(_) | CoreExpr::LocalVar(_) => e.clone(),
        CoreExpr::Plus(a, b) => CoreExpr::Plus(s(a), s(b)),
        CoreExpr::Let(y, a, b) => {
            let b = if y == x { b.clone() } else { s(b) };
            CoreExpr::Let(y.clone(), s(a), b)
        }
        CoreExpr::Deref(a) => CoreExpr::Deref(s(a)),
        CoreExpr::Update(a, b) => CoreExpr::Update(s(a), s(b)),
        CoreExpr::Fun {
            param,
            ty,
            ein,
            body,
        } => CoreExpr::Fun {
            param: param.clone(),
            ty: ty.clone(),
            ein: *ein,
            body: if param == x { body.clone() } else { s(body) },
        },
        CoreExpr::App(a, b) => CoreExpr::App(s(a), s(b)),
    }
}

pub fn core_step(state: &MachineState) -> StepOutcome {
    if state.e.is_value() {
        return StepOutcome::Finished(state.e.clone());
    }
    let mut g = state.g.clone();
    let mut n = state.n;
    match step(&mut g, &mut n, &state.e) {
        Ok(e) => StepOutcome::Next(MachineState { g, n, e }),
        Err(reason) => StepOutcome::Stuck(reason),
    }
}

/// One step of a non-value expression.
fn step(g: &mut Vec<CoreExpr>, n: &mut u32, e: &CoreExpr) -> Result<CoreExpr, String> {
    match e {
        CoreExpr::Plus(a, b) if !a.is_value() => Ok(CoreExpr::Plus(Box::new(step(g, n, a)?), b.clone())),
        CoreExpr::Plus(a, b) if !b.is_value() => Ok(CoreExpr::Plus(a.clone(), Box::new(step(g, n, b)?))),
        CoreExpr::Plus(a, b) => match (&**a, &**b) {
            (CoreExpr::IntLit(x), CoreExpr::IntLit(y)) => Ok(CoreExpr::IntLit(x + y)),
            _ => Err(format!("adding non-integers {a} and {b}")),
        },
        CoreExpr::Let(x, a, b) if !a.is_value() => {
            Ok(CoreExpr::Let(x.clone(), Box::new(step(g, n, a)?), b.clone()))
        }
        CoreExpr::Let(x, a, b) => Ok(substitute(b, x, a)),
        CoreExpr::Deref(a) if !a.is_value() => Ok(CoreExpr::Deref(Box::new(step(g, n, a)?))),
        CoreExpr::Deref(a) => match **a {
            CoreExpr::GlobalRef(i) if *n <= i && (i as usize) < g.len() => {
                *n = i + 1;
                Ok(g[i as usize].clone())
            }
            CoreExpr::GlobalRef(i) => Err(format!("g{i} is not accessible at stage {n}")),
            _ => Err(format!("dereferencing {a}")),
        },
        CoreExpr::Update(lhs, rhs) if !rhs.is_value() => {
            Ok(CoreExpr::Update(lhs.clone(), Box::new(step(g, n, rhs)?)))
        }
        CoreExpr::Update(lhs, rhs) if !lhs.is_value() => {
            Ok(CoreExpr::Update(Box::new(step(g, n, lhs)?), rhs.clone()))
        }
        CoreExpr::Update(lhs, rhs) => match **lhs {
            CoreExpr::GlobalRef(i) if *n <= i && (i as usize) < g.len() => {
                g[i as usize] = (**rhs).clone();
                *n = i + 1;
                Ok(CoreExpr::Unit)
            }
            CoreExpr::GlobalRef(i) => Err(format!("g{i} is not accessible at stage {n}")),
            _ => Err(format!("assigning to {lhs}")),
        },
        CoreExpr::App(f, a) if !f.is_value() => Ok(CoreExpr::App(Box::new(step(g, n, f)?), a.clone())),
        CoreExpr::App(f, a) if !a.is_value() => Ok(CoreExpr::App(f.clone(), Box::new(step(g, n, a)?))),
        CoreExpr::App(f, a) => match &**f {
            CoreExpr::Fun { param, body, .. } => Ok(substitute(body, param, a)),
            _ => Err(format!("applying {f}")),
        },
        CoreExpr::LocalVar(x) => Err(format!("free variable {x}")),
        CoreExpr::Unit | CoreExpr::IntLit(_) | CoreExpr::GlobalRef(_) | CoreExpr::Fun { .. } => {
            unreachable!("values do not step")
        }
    }
}

pub fn core_eval(mut state: MachineState, budget: usize) -> EvalOutcome {
    for _ in 0..=budget {
        match core_step(&state) {
            StepOutcome::Finished(value) => return EvalOutcome::Finished { value, state },
            StepOutcome::Stuck(reason) => return EvalOutcome::Stuck { reason, state },
            StepOutcome::Next(s) => state = s,
        }
    }
    EvalOutcome::StepBudgetExceeded
}

// ------------------------------------------------------------ generator

struct Gen {
    rng: ChaCha8Rng,
    n: u32,
    fresh: usize,
}

impl Gen {
    fn name(&mut self) -> String {
        self.fresh += 1;
        format!("x{}", self.fresh)
    }

    fn literal(&mut self) -> CoreExpr {
        CoreExpr::int(self.rng.gen_range(-20..=20))
    }

    fn vars_of(env: &TypeEnv, pred: impl Fn(&CoreType) -> bool) -> Vec<(String, CoreType)> {
        let mut seen: Vec<&String> = Vec::new();
        let mut out = Vec::new();
        for (x, t) in env.iter().rev() {
            if seen.contains(&x) {
                continue;
            }
            seen.push(x);
            if pred(t) {
                out.push((x.clone(), t.clone()));
            }
        }
        out
    }

    /// An expression of type `ty` that does not move the stage.
    fn pure(&mut self, env: &TypeEnv, ty: &CoreType) -> CoreExpr {
        let vars = Self::vars_of(env, |t| t == ty);
        if !vars.is_empty() && self.rng.gen_bool(0.5) {
            return CoreExpr::LocalVar(vars[self.rng.gen_range(0..vars.len())].0.clone());
        }
        match ty {
            CoreType::Unit => CoreExpr::Unit,
            CoreType::Int => self.literal(),
            CoreType::Ref(_, k) => CoreExpr::GlobalRef(*k),
            CoreType::Arrow { .. } => unreachable!("arrow arguments are not generated"),
        }
    }

    fn int(&mut self, env: &TypeEnv, stage: u32, depth: u32) -> (CoreExpr, u32) {
        if depth <= 1 {
            let vars = Self::vars_of(env, |t| *t == CoreType::Int);
            if !vars.is_empty() && self.rng.gen_bool(0.4) {
                return (CoreExpr::LocalVar(vars[self.rng.gen_range(0..vars.len())].0.clone()), stage);
            }
            return (self.literal(), stage);
        }
        match self.rng.gen_range(0..6) {
            0 => self.int(env, stage, 1),
            1 => {
                let (a, e1) = self.int(env, stage, depth - 1);
                let (b, e2) = self.int(env, e1, depth - 1);
                (CoreExpr::plus(a, b), e2)
            }
            2 => self.let_in(env, stage, depth, |g, env, s, d| {
                let (e, s) = g.int(env, s, d);
                (e, CoreType::Int, s)
            }),
            3 | 4 => match self.reference(env, stage, depth - 1) {
                Some((r, k, _)) => (CoreExpr::deref(r), k + 1),
                None => self.int(env, stage, 1),
            },
            _ => self.apply(env, stage, depth, &CoreType::Int),
        }
    }

    fn unit(&mut self, env: &TypeEnv, stage: u32, depth: u32) -> (CoreExpr, u32) {
        if depth <= 1 {
            return (CoreExpr::Unit, stage);
        }
        match self.rng.gen_range(0..5) {
            0 => (CoreExpr::Unit, stage),
            1 | 2 => {
                let (rhs, e1) = self.int(env, stage, depth - 1);
                match self.reference(env, e1, depth - 1) {
                    Some((lhs, k, _)) => (CoreExpr::update(lhs, rhs), k + 1),
                    None => self.let_in(env, stage, depth, |g, env, s, d| {
                        let (e, s) = g.unit(env, s, d);
                        (e, CoreType::Unit, s)
                    }),
                }
            }
            3 => self.let_in(env, stage, depth, |g, env, s, d| {
                let (e, s) = g.unit(env, s, d);
                (e, CoreType::Unit, s)
            }),
            _ => self.apply(env, stage, depth, &CoreType::Unit),
        }
    }

    /// A reference to some global `k` whose evaluation ends at or before `k`.
    fn reference(&mut self, env: &TypeEnv, stage: u32, depth: u32) -> Option<(CoreExpr, u32, u32)> {
        if stage >= self.n {
            return None;
        }
        let vars = Self::vars_of(env, |t| matches!(t, CoreType::Ref(_, k) if *k >= stage));
        if !vars.is_empty() && self.rng.gen_bool(0.4) {
            let (x, t) = &vars[self.rng.gen_range(0..vars.len())];
            let CoreType::Ref(_, k) = t else { unreachable!() };
            return Some((CoreExpr::LocalVar(x.clone()), *k, stage));
        }
        if depth > 1 && self.rng.gen_bool(0.2) {
            // let x = <pure int> in g_k
            let x = self.name();
            let k = self.rng.gen_range(stage..self.n);
            let bound = self.literal();
            return Some((CoreExpr::let_in(&x, bound, CoreExpr::GlobalRef(k)), k, stage));
        }
        let k = self.rng.gen_range(stage..self.n);
        Some((CoreExpr::GlobalRef(k), k, stage))
    }

    fn let_in(
        &mut self,
        env: &TypeEnv,
        stage: u32,
        depth: u32,
        body: impl FnOnce(&mut Gen, &TypeEnv, u32, u32) -> (CoreExpr, CoreType, u32),
    ) -> (CoreExpr, u32) {
        let x = self.name();
        let (bound, ty, e1) = self.any(env, stage, depth - 1);
        let mut inner = env.clone();
        inner.push((x.clone(), ty));
        let (b, _, e2) = body(self, &inner, e1, depth - 1);
        (CoreExpr::let_in(&x, bound, b), e2)
    }

    fn any(&mut self, env: &TypeEnv, stage: u32, depth: u32) -> (CoreExpr, CoreType, u32) {
        match self.rng.gen_range(0..4) {
            0 => {
                let (e, s) = self.unit(env, stage, depth);
                (e, CoreType::Unit, s)
            }
            1 => match self.reference(env, stage, depth) {
                Some((e, k, s)) => (e, CoreType::Ref(Box::new(CoreType::Int), k), s),
                None => {
                    let (e, s) = self.int(env, stage, depth);
                    (e, CoreType::Int, s)
                }
            },
            2 if depth > 1 => {
                let (f, ty) = self.function(env, stage, depth - 1, None);
                (f, ty, stage)
            }
            _ => {
                let (e, s) = self.int(env, stage, depth);
                (e, CoreType::Int, s)
            }
        }
    }

    fn arg_type(&mut self, at_least: u32) -> CoreType {
        match self.rng.gen_range(0..3) {
            0 => CoreType::Unit,
            1 if at_least < self.n => {
                CoreType::Ref(Box::new(CoreType::Int), self.rng.gen_range(at_least..self.n))
            }
            _ => CoreType::Int,
        }
    }

    /// A function literal starting no earlier than `stage`.
    fn function(
        &mut self,
        env: &TypeEnv,
        stage: u32,
        depth: u32,
        output: Option<&CoreType>,
    ) -> (CoreExpr, CoreType) {
        let ein = stage + self.rng.gen_range(0..=1);
        let input = self.arg_type(ein);
        self.function_with(env, ein, input, depth, output)
    }

    fn function_with(
        &mut self,
        env: &TypeEnv,
        ein: u32,
        input: CoreType,
        depth: u32,
        output: Option<&CoreType>,
    ) -> (CoreExpr, CoreType) {
        let x = self.name();
        let mut inner = env.clone();
        inner.push((x.clone(), input.clone()));
        let want_unit = match output {
            Some(t) => *t == CoreType::Unit,
            None => self.rng.gen_bool(0.5),
        };
        let (body, eout) = if want_unit {
            self.unit(&inner, ein, depth)
        } else {
            self.int(&inner, ein, depth)
        };
        let out = if want_unit { CoreType::Unit } else { CoreType::Int };
        let ty = CoreType::Arrow {
            input: Box::new(input.clone()),
            ein,
            output: Box::new(out),
            eout,
        };
        (CoreExpr::fun(&x, input, ein, body), ty)
    }

    fn apply(&mut self, env: &TypeEnv, stage: u32, depth: u32, output: &CoreType) -> (CoreExpr, u32) {
        let callable = Self::vars_of(env, |t| {
            matches!(t, CoreType::Arrow { ein, output: o, input, .. }
                if *ein >= stage && **o == *output && !matches!(**input, CoreType::Arrow { .. }))
        });
        if !callable.is_empty() && self.rng.gen_bool(0.5) {
            let (f, ty) = callable[self.rng.gen_range(0..callable.len())].clone();
            let CoreType::Arrow { input, eout, .. } = ty else {
                unreachable!()
            };
            let arg = self.pure(env, &input);
            return (CoreExpr::app(CoreExpr::LocalVar(f), arg), eout);
        }
        // Literal function: build the argument first so the entry stage can
        // be chosen after it.
        let input = self.arg_type(stage);
        let (arg, e2) = match &input {
            CoreType::Int => self.int(env, stage, depth - 1),
            CoreType::Unit => self.unit(env, stage, depth - 1),
            t => (self.pure(env, t), stage),
        };
        let ein = e2 + self.rng.gen_range(0..=1);
        let ein = match &input {
            CoreType::Ref(_, k) => ein.min(*k).max(e2),
            _ => ein,
        };
        let (f, ty) = self.function_with(env, ein, input, depth - 1, Some(output));
        let CoreType::Arrow { eout, .. } = ty else {
            unreachable!()
        };
        (CoreExpr::app(f, arg), eout)
    }
}

/// A closed term typable at stage 0 against `n_globals` Int globals.
pub fn generate_well_typed_term(seed: u64, depth: u32, n_globals: u32) -> CoreExpr {
    assert!(depth >= 1);
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        n: n_globals,
        fresh: 0,
    };
    let env = TypeEnv::new();
    if depth == 1 || g.rng.gen_bool(0.6) {
        g.int(&env, 0, depth).0
    } else {
        g.unit(&env, 0, depth).0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FuzzSummary {
    pub checked: usize,
    pub stepped: usize,
    pub stuck: usize,
    pub ill_typed: usize,
    pub preservation_failures: usize,
    pub budget_exceeded: usize,
}

/// Generates, type checks and runs `seeds` terms, re-checking the state
/// after every step.
pub fn core_fuzz(seeds: u64, depth: u32, n_globals: u32) -> FuzzSummary {
    let globals = vec![CoreType::Int; n_globals as usize];
    let mut s = FuzzSummary::default();
    for seed in 0..seeds {
        let e = generate_well_typed_term(seed, depth, n_globals);
        let Ok((ty, mut exit)) = core_typecheck(&globals, &TypeEnv::new(), 0, &e) else {
            s.ill_typed += 1;
            continue;
        };
        s.checked += 1;
        let mut state = MachineState {
            g: (0..n_globals).map(|i| CoreExpr::int(i as i64)).collect(),
            n: 0,
            e,
        };
        let mut steps = 0;
        loop {
            match core_step(&state) {
                StepOutcome::Finished(_) => break,
                StepOutcome::Stuck(_) => {
                    s.stuck += 1;
                    break;
                }
                StepOutcome::Next(next) => {
                    s.stepped += 1;
                    steps += 1;
                    match core_typecheck(&globals, &TypeEnv::new(), next.n, &next.e) {
                        Ok((t, j)) if t == ty && j <= exit => exit = j,
                        _ => {
                            s.preservation_failures += 1;
                            break;
                        }
                    }
                    state = next;
                }
            }
            if steps > 100_000 {
                s.budget_exceeded += 1;
                break;
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(n: usize) -> Vec<CoreType> {
        vec![CoreType::Int; n]
    }

    #[test]
    fn globals_type_at_their_index() {
        let t = core_typecheck(&ints(2), &vec![], 0, &CoreExpr::GlobalRef(1)).unwrap();
        assert_eq!(t, (CoreType::Ref(Box::new(CoreType::Int), 1), 0));
    }

    #[test]
    fn deref_past_stage_is_rejected() {
        let e = CoreExpr::deref(CoreExpr::GlobalRef(0));
        let err = core_typecheck(&ints(2), &vec![], 2, &e).unwrap_err();
        assert_eq!(err.rule, "deref");
    }

    fn copy_g0_to_g1() -> CoreExpr {
        CoreExpr::let_in(
            "x",
            CoreExpr::deref(CoreExpr::GlobalRef(0)),
            CoreExpr::update(CoreExpr::GlobalRef(1), CoreExpr::var("x")),
        )
    }

    #[test]
    fn let_deref_update_exits_at_two() {
        let t = core_typecheck(&ints(2), &vec![], 0, &copy_g0_to_g1()).unwrap();
        assert_eq!(t, (CoreType::Unit, 2));
    }

    #[test]
    fn update_checks_rhs_before_lhs() {
        // g0 := !g1 reads g1 first, so g0 is already behind.
        let e = CoreExpr::update(CoreExpr::GlobalRef(0), CoreExpr::deref(CoreExpr::GlobalRef(1)));
        assert_eq!(core_typecheck(&ints(2), &vec![], 0, &e).unwrap_err().rule, "update");
        let e = CoreExpr::update(CoreExpr::GlobalRef(1), CoreExpr::deref(CoreExpr::GlobalRef(0)));
        assert_eq!(core_typecheck(&ints(2), &vec![], 0, &e).unwrap(), (CoreType::Unit, 2));
    }

    #[test]
    fn app_requires_entry_stage() {
        let f = CoreExpr::fun("r", CoreType::Int, 1, CoreExpr::deref(CoreExpr::GlobalRef(1)));
        let call = CoreExpr::app(f.clone(), CoreExpr::int(3));
        assert_eq!(core_typecheck(&ints(2), &vec![], 0, &call).unwrap(), (CoreType::Int, 2));
        let late = CoreExpr::app(f, CoreExpr::plus(CoreExpr::deref(CoreExpr::GlobalRef(1)), CoreExpr::int(0)));
        assert_eq!(core_typecheck(&ints(2), &vec![], 0, &late).unwrap_err().rule, "app");
    }

    fn state(g: &[i64], n: u32, e: CoreExpr) -> MachineState {
        MachineState {
            g: g.iter().map(|v| CoreExpr::int(*v)).collect(),
            n,
            e,
        }
    }

    #[test]
    fn deref_steps_past_the_global() {
        let s = state(&[5, 9], 0, CoreExpr::deref(CoreExpr::GlobalRef(1)));
        assert_eq!(core_step(&s), StepOutcome::Next(state(&[5, 9], 2, CoreExpr::int(9))));
        let s = state(&[5, 9], 2, CoreExpr::deref(CoreExpr::GlobalRef(1)));
        assert!(matches!(core_step(&s), StepOutcome::Stuck(_)));
    }

    #[test]
    fn plus_of_values() {
        let s = state(&[], 0, CoreExpr::plus(CoreExpr::int(1), CoreExpr::int(2)));
        assert_eq!(core_step(&s), StepOutcome::Next(state(&[], 0, CoreExpr::int(3))));
    }

    #[test]
    fn whole_program_copies_a_global() {
        match core_eval(state(&[7, 0], 0, copy_g0_to_g1()), 100) {
            EvalOutcome::Finished { value, state: s } => {
                assert_eq!(value, CoreExpr::Unit);
                assert_eq!(s.g, vec![CoreExpr::int(7), CoreExpr::int(7)]);
                assert_eq!(s.n, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn values_finish_and_stuck_stays_stuck() {
        assert!(matches!(
            core_eval(state(&[], 0, CoreExpr::int(4)), 1),
            EvalOutcome::Finished { .. }
        ));
        assert!(matches!(
            core_eval(state(&[1], 1, CoreExpr::deref(CoreExpr::GlobalRef(0))), 10),
            EvalOutcome::Stuck { .. }
        ));
    }

    #[test]
    fn integers_do_not_wrap() {
        let big = CoreExpr::IntLit(BigInt::from(u64::MAX));
        let s = state(&[], 0, CoreExpr::plus(big.clone(), big));
        let StepOutcome::Next(next) = core_step(&s) else { panic!() };
        assert_eq!(next.e, CoreExpr::IntLit(BigInt::from(u64::MAX) * 2));
    }

    #[test]
    fn depth_one_is_a_literal() {
        assert!(generate_well_typed_term(0, 1, 4).is_value());
    }

    #[test]
    fn substitution_respects_shadowing() {
        let e = CoreExpr::let_in("x", CoreExpr::var("x"), CoreExpr::var("x"));
        assert_eq!(
            substitute(&e, "x", &CoreExpr::int(1)),
            CoreExpr::let_in("x", CoreExpr::int(1), CoreExpr::var("x"))
        );
    }
}
