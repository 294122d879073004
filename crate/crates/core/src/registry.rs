//! Named strategies for threshold construction and threshold-to-threshold
//! evolution, selected at runtime.

use crate::error::{Error, Result};
use crate::full::{FullModel, KernelKind, DEFAULT_ZFA_CAP};
use crate::lattice::{normalize_min_zero, Disorder, IntField, ModelParams};
use crate::oracle::{brute_threshold, brute_threshold_full, DEFAULT_BOUND};
use crate::toy::{flat_evolve, negative_threshold, positive_threshold, t2t_evolve, t2t_evolve_array, threshold_max_and_force, T2tRun};

/// Knobs shared by the threshold engines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    pub kernel: KernelKind,
    pub bound: i64,
    pub zfa_cap: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { kernel: KernelKind::Exact, bound: DEFAULT_BOUND, zfa_cap: DEFAULT_ZFA_CAP }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPair {
    /// Min-normalized positive threshold.
    pub m_plus: IntField,
    /// Min-normalized negative threshold.
    pub m_minus: IntField,
    pub f_th: f64,
}

pub trait ThresholdEngine: Send + Sync {
    fn name(&self) -> &'static str;
    fn compute(&self, disorder: &Disorder, params: &ModelParams, opts: &EngineOptions) -> Result<ThresholdPair>;
}

pub trait T2tEngine: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, disorder: &Disorder) -> Result<T2tRun>;
}

/// `m⁻(α) = -m⁺(-α)`, which holds for both models.
fn mirrored(m_plus_of_negated: IntField) -> IntField {
    let mut m: IntField = m_plus_of_negated.into_iter().map(|v| -v).collect();
    normalize_min_zero(&mut m);
    m
}

struct ToyClosedForm;

impl ThresholdEngine for ToyClosedForm {
    fn name(&self) -> &'static str {
        "toy"
    }
    fn compute(&self, disorder: &Disorder, params: &ModelParams, _: &EngineOptions) -> Result<ThresholdPair> {
        Ok(ThresholdPair {
            m_plus: positive_threshold(disorder)?.m,
            m_minus: negative_threshold(disorder)?.m,
            f_th: threshold_max_and_force(disorder, params)?.1,
        })
    }
}

struct ToyZfa;

impl ThresholdEngine for ToyZfa {
    fn name(&self) -> &'static str {
        "toy-zfa"
    }
    fn compute(&self, disorder: &Disorder, params: &ModelParams, _: &EngineOptions) -> Result<ThresholdPair> {
        let plus = flat_evolve(disorder)?.final_config.m;
        let minus = mirrored(flat_evolve(&disorder.negated()?)?.final_config.m);
        let mut m_plus = plus;
        normalize_min_zero(&mut m_plus);
        Ok(ThresholdPair { m_plus, m_minus: minus, f_th: threshold_max_and_force(disorder, params)?.1 })
    }
}

struct Full;

impl ThresholdEngine for Full {
    fn name(&self) -> &'static str {
        "full"
    }
    fn compute(&self, disorder: &Disorder, params: &ModelParams, opts: &EngineOptions) -> Result<ThresholdPair> {
        let plus = FullModel::new(disorder, *params, opts.kernel)?.threshold(opts.zfa_cap)?;
        let negated = disorder.negated()?;
        let minus = FullModel::new(&negated, *params, opts.kernel)?.threshold(opts.zfa_cap)?;
        Ok(ThresholdPair { m_plus: plus.m_plus, m_minus: mirrored(minus.m_plus), f_th: plus.f_th })
    }
}

struct Brute;

impl ThresholdEngine for Brute {
    fn name(&self) -> &'static str {
        "brute"
    }
    fn compute(&self, disorder: &Disorder, params: &ModelParams, opts: &EngineOptions) -> Result<ThresholdPair> {
        let b = brute_threshold(disorder, opts.bound)?;
        // max z = max ỹ/η in the toy model.
        let f_th = params.lambda * (0.5 - params.eta * b.max_value);
        Ok(ThresholdPair { m_plus: b.m_plus, m_minus: b.m_minus, f_th })
    }
}

struct BruteFull;

impl ThresholdEngine for BruteFull {
    fn name(&self) -> &'static str {
        "brute-full"
    }
    fn compute(&self, disorder: &Disorder, params: &ModelParams, opts: &EngineOptions) -> Result<ThresholdPair> {
        let b = brute_threshold_full(disorder, params, opts.bound)?;
        Ok(ThresholdPair { m_plus: b.m_plus, m_minus: b.m_minus, f_th: params.lambda * (0.5 - b.max_value) })
    }
}

struct Records;

impl T2tEngine for Records {
    fn name(&self) -> &'static str {
        "records"
    }
    fn run(&self, disorder: &Disorder) -> Result<T2tRun> {
        t2t_evolve(disorder)
    }
}

struct Arrays;

impl T2tEngine for Arrays {
    fn name(&self) -> &'static str {
        "array"
    }
    fn run(&self, disorder: &Disorder) -> Result<T2tRun> {
        t2t_evolve_array(disorder)
    }
}

/// Strategies of one kind, looked up by name.
pub struct Registry<T: ?Sized> {
    entries: Vec<Box<T>>,
}

impl<T: ?Sized> Default for Registry<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

macro_rules! registry_impl {
    ($t:ident) => {
        impl Registry<dyn $t> {
            /// Adds `engine`, replacing any entry with the same name.
            pub fn register(&mut self, engine: Box<dyn $t>) {
                self.entries.retain(|e| e.name() != engine.name());
                self.entries.push(engine);
            }

            pub fn names(&self) -> Vec<&'static str> {
                self.entries.iter().map(|e| e.name()).collect()
            }

            pub fn get(&self, name: &str) -> Result<&dyn $t> {
                self.entries.iter().find(|e| e.name() == name).map(|e| e.as_ref()).ok_or_else(|| {
                    Error::UnknownStrategy { name: name.to_string(), available: self.names().join(", ") }
                })
            }
        }
    };
}

registry_impl!(ThresholdEngine);
registry_impl!(T2tEngine);

pub fn threshold_engines() -> Registry<dyn ThresholdEngine> {
    let mut r: Registry<dyn ThresholdEngine> = Registry::default();
    r.register(Box::new(ToyClosedForm));
    r.register(Box::new(ToyZfa));
    r.register(Box::new(Full));
    r.register(Box::new(Brute));
    r.register(Box::new(BruteFull));
    r
}

pub fn t2t_engines() -> Registry<dyn T2tEngine> {
    let mut r: Registry<dyn T2tEngine> = Registry::default();
    r.register(Box::new(Records));
    r.register(Box::new(Arrays));
    r
}
