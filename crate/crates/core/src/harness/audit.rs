//! Audit suites: exact identities checked to a tolerance, inequalities with
//! unknown constants recorded as ratio statistics.
//!
//! A suite is a pure function of `(config, seed)`; trial seeds are split from
//! the root seed, so any recorded argmax seed replays its instance exactly.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::generate::{
    random_family, random_kernel, random_lift, random_scalar_symbol, random_scalar_weight, random_sparse_model,
    random_symbols, random_vector_field, random_weight, rng_from_seed, trial_seed, InstanceRng,
};
use crate::bmo::{bmo_norm, orlicz_holder_check, BmoKind, BmoRequest, BmoSymbols, YoungFunction};
use crate::commutator::{
    conjugated_operator_block, expand_commutator, lemma_a_audit, nested_commutator, phi_blocks, psi_factorization, psi_matrices,
    reducing_choices, GridOperator, PhiContext,
};
use crate::domination::{
    build_p1_certificate, commutator_domination, convex_membership, integral_bound_rhs, integral_lhs, mean_norm, support_function, verify_certificate,
    DominationCertificate,
};
use crate::error::{Error, Result};
use crate::grid::{Grid, MatrixField, ScalarField, VectorField};
use crate::linalg::{Matrix, Scalar};
use crate::pdmat::{conjugate_exponent, Reducer};
use crate::tuples::{cancellation_sum, mean_insertion_identity, Tuple};
use crate::weights::{
    ap_characteristic, conjugate_weight, reverse_holder_exponent, rhi_ratio, sc_ainfty, Conjugation, DirectionPlan, MatrixWeight,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const REPORT_HEADER: &str = "suprema are taken over the dyadic cubes of the grid only";

fn default_seed() -> u64 {
    20_240_601
}
fn default_trials() -> usize {
    50
}
fn default_d() -> usize {
    1
}
fn default_level() -> u32 {
    4
}
fn default_n() -> usize {
    3
}
fn default_m() -> usize {
    2
}
fn default_p() -> Vec<f64> {
    vec![1.5, 2.0, 3.0]
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_suites() -> Vec<String> {
    vec!["exact".into()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_level")]
    pub level: u32,
    /// Largest matrix size drawn.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Largest symbol count drawn by the ratio suites.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Suite names, or the groups `exact`, `ratio`, `all`.
    #[serde(default = "default_suites")]
    pub suites: Vec<String>,
    /// Per-check tolerance overrides.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            seed: default_seed(),
            trials: default_trials(),
            d: default_d(),
            level: default_level(),
            n: default_n(),
            m: default_m(),
            p: default_p(),
            amplitude: default_amplitude(),
            suites: default_suites(),
            tolerances: BTreeMap::new(),
        }
    }
}

impl AuditConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: AuditConfig = crate::grid::parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| Err(Error::Invalid { path: path.into(), msg });
        if self.d != 1 && self.d != 2 {
            return bad("/d", format!("d = {} must be 1 or 2", self.d));
        }
        if self.level == 0 || self.level > 8 {
            return bad("/level", format!("level = {} outside 1..=8", self.level));
        }
        if self.n == 0 || self.n > 4 {
            return bad("/n", format!("n = {} outside 1..=4", self.n));
        }
        if self.m == 0 || self.m > 4 {
            return bad("/m", format!("m = {} outside 1..=4", self.m));
        }
        if self.p.is_empty() {
            return bad("/p", "at least one exponent".into());
        }
        for (i, p) in self.p.iter().enumerate() {
            if !(p.is_finite() && *p > 1.0) {
                return bad(&format!("/p/{i}"), format!("p = {p} must exceed 1"));
            }
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return bad("/amplitude", format!("amplitude = {} must be positive", self.amplitude));
        }
        for (i, s) in self.suites.iter().enumerate() {
            if !matches!(s.as_str(), "exact" | "ratio" | "all") && suite(s).is_none() {
                return bad(&format!("/suites/{i}"), format!("unknown suite `{s}`"));
            }
        }
        for (k, v) in &self.tolerances {
            if check_info(k).is_none() {
                return bad(&format!("/tolerances/{k}"), format!("unknown check `{k}`"));
            }
            if !(v.is_finite() && *v >= 0.0) {
                return bad(&format!("/tolerances/{k}"), format!("tolerance {v} must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    /// Suite names in run order, groups expanded and duplicates dropped.
    pub fn resolved_suites(&self) -> Result<Vec<&'static str>> {
        self.validate()?;
        let mut out: Vec<&'static str> = Vec::new();
        for s in &self.suites {
            let names: Vec<&'static str> = match s.as_str() {
                "exact" => SUITES.iter().filter(|x| x.group == Group::Exact).map(|x| x.name).collect(),
                "ratio" => SUITES.iter().filter(|x| x.group == Group::Ratio).map(|x| x.name).collect(),
                "all" => SUITES.iter().map(|x| x.name).collect(),
                other => vec![suite(other).expect("validated").name],
            };
            for nm in names {
                if !out.contains(&nm) {
                    out.push(nm);
                }
            }
        }
        Ok(out)
    }

    fn tol(&self, check: &str) -> f64 {
        self.tolerances.get(check).copied().unwrap_or_else(|| check_info(check).and_then(|c| c.tol).unwrap_or(0.0))
    }

    fn grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.level)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    /// Identity or provable inequality: must pass.
    Exact,
    /// Inequality with an unknown constant: statistics only.
    Ratio,
}

/// `[U]_{A_p}`, `[V]_{A_p}`, `[U,V]_{A_p}` of the instance behind a ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Characteristics {
    pub p: f64,
    pub u_ap: f64,
    pub v_ap: f64,
    pub uv_ap: f64,
}

impl Characteristics {
    pub fn of(u: &MatrixWeight, v: &MatrixWeight, p: f64) -> Result<Self> {
        Ok(Characteristics {
            p,
            u_ap: ap_characteristic(u, None, p)?.value,
            v_ap: ap_characteristic(v, None, p)?.value,
            uv_ap: ap_characteristic(u, Some(v), p)?.value,
        })
    }
}

/// One measurement from one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Observation {
    pub check: &'static str,
    /// Error (exact identities), lhs/rhs (exact inequalities), 0/1 (flags) or the ratio.
    pub value: f64,
    pub ok: bool,
    pub characteristics: Option<Characteristics>,
}

impl Observation {
    fn error(cfg: &AuditConfig, check: &'static str, value: f64) -> Self {
        Observation { check, value, ok: value <= cfg.tol(check), characteristics: None }
    }

    fn bound(cfg: &AuditConfig, check: &'static str, lhs: f64, rhs: f64) -> Self {
        let value = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        Observation { check, value, ok: value <= 1.0 + cfg.tol(check), characteristics: None }
    }

    fn flag(check: &'static str, ok: bool) -> Self {
        Observation { check, value: if ok { 0.0 } else { 1.0 }, ok, characteristics: None }
    }

    fn ratio(check: &'static str, value: f64, characteristics: Option<Characteristics>) -> Self {
        Observation { check, value, ok: value.is_finite() && value > 0.0, characteristics }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub suite: String,
    pub name: String,
    pub anchor: String,
    pub status: CheckStatus,
    pub passed: bool,
    /// Observations aggregated (some checks record several per trial).
    pub samples: usize,
    /// Worst observed value: the largest error, lhs/rhs, or ratio.
    pub value: f64,
    pub tolerance: Option<f64>,
    pub max_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
    /// Trial seed of the worst value; `replay` regenerates it.
    pub argmax_seed: u64,
    pub characteristics: Option<Characteristics>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub suite_millis: BTreeMap<String, u64>,
}

impl Environment {
    fn current(threads: usize) -> Self {
        Environment {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads,
            suite_millis: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub header: String,
    pub config: AuditConfig,
    pub checks: Vec<CheckRecord>,
    pub exact_pass: bool,
    pub environment: Environment,
}

impl AuditReport {
    pub fn exact_failures(&self) -> Vec<&CheckRecord> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Exact && !c.passed).collect()
    }

    /// The report with the environment stamp cleared.
    pub fn without_environment(&self) -> Self {
        AuditReport { environment: Environment::default(), ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Group {
    Exact,
    Ratio,
}

type TrialFn = fn(&AuditConfig, u64) -> Result<Vec<Observation>>;

struct Suite {
    name: &'static str,
    group: Group,
    /// Trials per `config.trials`.
    multiplier: usize,
    trial: TrialFn,
}

const SUITES: &[Suite] = &[
    Suite { name: "cancellation", group: Group::Exact, multiplier: 4, trial: cancellation },
    Suite { name: "mean_insertion", group: Group::Exact, multiplier: 1, trial: mean_insertion },
    Suite { name: "expansion", group: Group::Exact, multiplier: 1, trial: expansion },
    Suite { name: "phi", group: Group::Exact, multiplier: 1, trial: phi },
    Suite { name: "certificates", group: Group::Exact, multiplier: 1, trial: certificates },
    Suite { name: "conjugation", group: Group::Exact, multiplier: 1, trial: conjugation },
    Suite { name: "lemma_a", group: Group::Exact, multiplier: 1, trial: lemma_a },
    Suite { name: "sub_duality", group: Group::Exact, multiplier: 1, trial: sub_duality },
    Suite { name: "membership", group: Group::Exact, multiplier: 4, trial: membership },
    Suite { name: "bmo_ratios", group: Group::Ratio, multiplier: 1, trial: bmo_ratios },
    Suite { name: "strong_jn", group: Group::Ratio, multiplier: 1, trial: strong_jn },
    Suite { name: "bloom", group: Group::Ratio, multiplier: 1, trial: bloom },
    Suite { name: "reverse_holder", group: Group::Ratio, multiplier: 1, trial: reverse_holder },
    Suite { name: "weight_ratios", group: Group::Ratio, multiplier: 1, trial: weight_ratios },
    Suite { name: "monotonicity", group: Group::Ratio, multiplier: 1, trial: monotonicity },
    Suite { name: "orlicz_holder", group: Group::Ratio, multiplier: 1, trial: orlicz_holder },
    Suite { name: "integral_domination", group: Group::Ratio, multiplier: 1, trial: integral_domination },
];

fn suite(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.name).collect()
}

pub struct CheckInfo {
    pub name: &'static str,
    pub anchor: &'static str,
    pub status: CheckStatus,
    pub tol: Option<f64>,
}

const fn exact(name: &'static str, anchor: &'static str, tol: f64) -> CheckInfo {
    CheckInfo { name, anchor, status: CheckStatus::Exact, tol: Some(tol) }
}

const fn ratio(name: &'static str, anchor: &'static str) -> CheckInfo {
    CheckInfo { name, anchor, status: CheckStatus::Ratio, tol: None }
}

pub const CHECKS: &[CheckInfo] = &[
    exact("cancellation", "Σ_{α≤σ≤β^c} (−1)^{|θ|−|α|−|β|−|σ|} B_{(σ−α)^t}B_{σ^c−β} = 0 for α < β^c", 1e-10),
    exact("mean_insertion", "commutator kernel = its expansion around the cube means m_Q B", 1e-10),
    exact("expansion", "nested commutator = Σ_σ (−1)^{m−|σ|} B_σ T B_{(σ^c)^t}", 1e-10),
    exact("psi_factorization", "tuple expansion = Ψ T̄ Ψ̃", 1e-10),
    exact("phi_inverse", "Φ(x)Φ^{-1}(x) = I", 1e-9),
    exact("phi_top_right", "top-right block of Φ T̄ Φ^{-1} = V^{1/p} T_B U^{-1/p} (scalar powers: /m!)", 1e-9),
    exact("phi_binomial", "block (i,j) of Φ(x)Φ^{-1}(y) = (b(x)−b(y))^{j−i}/(j−i)! W_i^{1/p}(x)W_j^{-1/p}(y)", 1e-9),
    exact("certificate_verify", "sparse certificate reproduces T̄F with kernels bounded by 1", 0.0),
    exact("builder_verify", "stopping-time certificate reproduces T̄(Ψ̃f) and is (1−ε)-sparse", 0.0),
    exact("commutator_domination", "Σ_Q a_Q Σ_σ (−1)^{m−|σ|} B_σ⟨K_Q B_{(σ^c)^t} f⟩ = T_B f", 1e-10),
    exact("diagonal_preservation", "scalar kernels give a certificate with kernels in ℝ·I", 0.0),
    exact("ap_conjugation_invariance", "[(A*W^{2/p}A)^{p/2}]_{A_p} = [W]_{A_p}", 1e-8),
    ratio("localized_reducing_ratio", "‖R_{Q,q,V_I}‖ / ‖R_{Q,p,V}R_{I,p,U}^{-1}‖^{p/q}"),
    exact("lemma_a", "Σ_Q|Q|⟪Ψ̃U^{-1/p}f⟫⟪Ψ*V^{1/p}g⟫ ≤ η^{-1} sup‖R_QP_Q‖ Σ_σ ‖M f‖_p ‖M g‖_{p'}", 1e-10),
    exact("sub1_duality", "‖B‖_{BMO^p_{V,U,σ,1}} = ‖B*‖_{BMO^{p',*}_{U^{-p'/p},V^{-p'/p},σ,2}}", 1e-10),
    exact("sub2_duality", "‖B‖_{BMO^p_{V,U,σ,2}} = ‖B*‖_{BMO^{p',*}_{U^{-p'/p},V^{-p'/p},σ,1}}", 1e-10),
    exact("membership_agreement", "closed form (r=2), LP (r=1) and support sweep agree off a 1e-8 band", 0.0),
    exact("membership_nesting", "gauge of ⟪f⟫_2 ≤ gauge of ⟪f⟫_1", 1e-8),
    ratio("red_over_red_star", "‖B‖_{BMO^p_{V,U,σ}} / ([V]_{A_p}^{1/(|σ|p)} ‖B*‖_{BMO^{p',*}_{U^{-p'/p},V^{-p'/p},σ}})"),
    ratio("red_star_over_red", "‖B*‖_{BMO^{p',*}_{U^{-p'/p},V^{-p'/p},σ}} / ([U]_{A_p}^{1/(|σ|p)} ‖B‖_{BMO^p_{V,U,σ}})"),
    ratio("tilde_over_sub_products", "‖B‖~ / ([U,V]_{A_p}^{1/p} Σ_α ‖B‖_{α,1}^p ‖B‖^*_{σ−α,2}^p)"),
    ratio("tilde_over_sub_products_exp1", "‖B‖~ / ([U,V]_{A_p}^{1/p} Σ_α ‖B‖_{α,1} ‖B‖^*_{σ−α,2})"),
    ratio("jn_j1_over_j", "‖b‖_{j,1}^p / ‖b‖_j^{jp}"),
    ratio("jn_j2_over_j", "‖b‖_{j,2}^{p'} / ‖b‖_j^{jp}"),
    ratio("jn_tilde_over_j", "‖b‖~_j / ‖b‖_j^{jp}"),
    ratio("jn_tilde2_over_j", "‖b‖~_{j,2} / ‖b‖_j^{jp}"),
    ratio("bloom_ratio", "‖b‖_{BMO^p_{vI,uI,j}} / ‖b‖_{BMO(ν^{1/j})}, ν = (u/v)^{1/p}"),
    ratio("reverse_holder", "(⨍‖W^{1/p}A‖^{rp})^{1/rp} / (⨍‖W^{1/p}A‖^p)^{1/p} at r = 1 + 1/(2^{d+11}[W]_{A^{sc}_{p,∞}})"),
    ratio("ap_duality_ratio", "[U]_{A_p}^{1/p} / [U^{-p'/p}]_{A_{p'}}^{1/p'}"),
    ratio("ap_chain_ratio", "[U]_{A_p} / ([U,V]_{A_p}[V,U]_{A_p})"),
    ratio("ap_power_ratio", "[U^r,V^r]_{A_{pr}} / [U,V]_{A_p}^r"),
    exact("ap_monotonicity", "[U,V]_{A_q} ≤ [U,V]_{A_p} for p < q", 1e-10),
    exact("orlicz_holder", "⨍|fg| ≤ 2κ‖f‖_{Φ(L)}‖g‖_{Ψ(L)}", 1e-9),
    ratio("integral_domination", "∫|⟨T_B f,g⟩| / (C Σ_Q|Q|⟪Ψ̃f⟫_{r,Q}⟪Ψ*g⟫_{s,Q})"),
];

pub fn check_info(name: &str) -> Option<&'static CheckInfo> {
    CHECKS.iter().find(|c| c.name == name)
}

/// Runs `trial` on every seed, spread over the available cores; output is in seed order.
fn run_trials(cfg: &AuditConfig, trial: TrialFn, seeds: &[u64], threads: usize) -> Vec<Result<Vec<Observation>>> {
    if threads <= 1 {
        return seeds.iter().map(|&s| trial(cfg, s)).collect();
    }
    let mut out: Vec<Option<Result<Vec<Observation>>>> = (0..seeds.len()).map(|_| None).collect();
    let chunk = seeds.len().div_ceil(threads.max(1)).max(1);
    std::thread::scope(|scope| {
        for (slot, ss) in out.chunks_mut(chunk).zip(seeds.chunks(chunk)) {
            scope.spawn(move || {
                for (o, &s) in slot.iter_mut().zip(ss) {
                    *o = Some(trial(cfg, s));
                }
            });
        }
    });
    out.into_iter().map(|o| o.expect("every slot filled")).collect()
}

fn aggregate(suite_name: &str, seeds: &[u64], results: Vec<Vec<Observation>>, cfg: &AuditConfig) -> Vec<CheckRecord> {
    let mut order: Vec<&'static str> = Vec::new();
    let mut recs: BTreeMap<&'static str, CheckRecord> = BTreeMap::new();
    for (seed, obs) in seeds.iter().zip(results) {
        for o in obs {
            let info = check_info(o.check).expect("observations name registered checks");
            let rec = recs.entry(o.check).or_insert_with(|| {
                order.push(o.check);
                CheckRecord {
                    suite: suite_name.into(),
                    name: o.check.into(),
                    anchor: info.anchor.into(),
                    status: info.status,
                    passed: true,
                    samples: 0,
                    value: f64::NEG_INFINITY,
                    tolerance: match info.status {
                        CheckStatus::Exact => Some(cfg.tol(o.check)),
                        CheckStatus::Ratio => None,
                    },
                    max_ratio: None,
                    min_ratio: None,
                    argmax_seed: *seed,
                    characteristics: None,
                }
            });
            rec.samples += 1;
            rec.passed &= o.ok;
            // NaN counts as worst
            if !rec.value.is_nan() && (o.value.is_nan() || o.value > rec.value) {
                rec.value = o.value;
                rec.argmax_seed = *seed;
                rec.characteristics = o.characteristics;
            }
            if info.status == CheckStatus::Ratio {
                rec.max_ratio = Some(rec.value);
                rec.min_ratio = Some(rec.min_ratio.map_or(o.value, |m| m.min(o.value)));
            }
        }
    }
    order.into_iter().map(|k| recs.remove(k).expect("recorded")).collect()
}

pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    let names = cfg.resolved_suites()?;
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut env = Environment::current(threads);
    let mut checks = Vec::new();
    for name in names {
        let s = suite(name).expect("resolved");
        let start = Instant::now();
        let seeds: Vec<u64> = (0..cfg.trials * s.multiplier).map(|t| trial_seed(cfg.seed, name, t)).collect();
        let mut results = Vec::with_capacity(seeds.len());
        for (seed, r) in seeds.iter().zip(run_trials(cfg, s.trial, &seeds, threads)) {
            results.push(r.map_err(|e| Error::Domain(format!("suite {name}, seed {seed}: {e}")))?);
        }
        checks.extend(aggregate(name, &seeds, results, cfg));
        env.suite_millis.insert(name.into(), start.elapsed().as_millis() as u64);
    }
    let exact_pass = checks.iter().all(|c| c.status == CheckStatus::Ratio || c.passed);
    Ok(AuditReport { schema_version: SCHEMA_VERSION, header: REPORT_HEADER.into(), config: cfg.clone(), checks, exact_pass, environment: env })
}

/// Re-runs one trial of one suite.
pub fn replay(cfg: &AuditConfig, suite_name: &str, seed: u64) -> Result<Vec<Observation>> {
    let s = suite(suite_name).ok_or_else(|| Error::Invalid { path: "/suites".into(), msg: format!("unknown suite `{suite_name}`") })?;
    (s.trial)(cfg, seed)
}

fn pick<T: Copy>(rng: &mut InstanceRng, xs: &[T]) -> T {
    xs[rng.gen_range(0..xs.len())]
}

fn rand_matrix<T: Scalar>(rng: &mut InstanceRng, n: usize, gen: &mut dyn FnMut(&mut InstanceRng) -> T) -> Matrix<T> {
    Matrix::from_fn(n, n, |_, _| gen(rng))
}

fn random_theta(rng: &mut InstanceRng, m: usize) -> Tuple {
    loop {
        let elems: Vec<usize> = (1..=m).filter(|_| rng.gen_bool(0.6)).collect();
        if !elems.is_empty() {
            return Tuple::new(elems, m).expect("elements in 1..=m");
        }
    }
}

fn random_invertible(rng: &mut InstanceRng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| rng.gen_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 })
}

// ---------------------------------------------------------------- exact suites

fn cancellation(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let n = rng.gen_range(1..=cfg.n);
    let complex = rng.gen_bool(0.5);
    fn worst<T: Scalar>(mats: &[Matrix<T>], n: usize) -> Result<f64> {
        let scale = mats.iter().map(|m| m.op_norm()).fold(1.0f64, f64::max);
        let mut err = 0.0f64;
        for theta in Tuple::full(4).subtuples() {
            let subs = theta.subtuples();
            for alpha in &subs {
                for beta in &subs {
                    if !alpha.lt(&theta.minus(beta)?) {
                        continue;
                    }
                    let s = cancellation_sum(mats, n, &theta, alpha, beta)?;
                    err = err.max(s.max_abs() / scale.powi(theta.len() as i32));
                }
            }
        }
        Ok(err)
    }
    let err = if complex {
        let mats: Vec<Matrix<Complex64>> =
            (0..4).map(|_| rand_matrix(&mut rng, n, &mut |r| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))).collect();
        worst(&mats, n)?
    } else {
        let mats: Vec<Matrix> = (0..4).map(|_| rand_matrix(&mut rng, n, &mut |r| r.gen_range(-1.0..1.0))).collect();
        worst(&mats, n)?
    };
    Ok(vec![Observation::error(cfg, "cancellation", err)])
}

fn small_grid(cfg: &AuditConfig, cap: u32) -> Result<Grid> {
    Grid::new(cfg.d, cfg.level.min(cap))
}

fn mean_insertion(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = small_grid(cfg, if cfg.d == 1 { 4 } else { 2 })?;
    let n = rng.gen_range(1..=cfg.n);
    let m = rng.gen_range(1..=4);
    let b = random_symbols(&mut rng, grid, n, m, cfg.amplitude);
    // constant matrices must commute with T, so the kernel is scalar
    let op = random_lift(&mut rng, grid, 1.0);
    let f = random_vector_field(&mut rng, grid, n);
    let theta = random_theta(&mut rng, m);
    let cubes = grid.all_cubes();
    let q = cubes[rng.gen_range(0..cubes.len())];
    let apply = |g: &VectorField| op.apply(g).expect("shapes match");
    let (lhs, rhs) = mean_insertion_identity(&b, &theta, &q, &apply, &f)?;
    let scale = lhs.max_norm().max(rhs.max_norm()).max(f64::MIN_POSITIVE);
    Ok(vec![Observation::error(cfg, "mean_insertion", lhs.max_distance(&rhs) / scale)])
}

fn expansion(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = small_grid(cfg, if cfg.d == 1 { 4 } else { 2 })?;
    let n = rng.gen_range(1..=cfg.n);
    let m = rng.gen_range(0..=4);
    let b = random_symbols(&mut rng, grid, n, m, cfg.amplitude);
    let op = random_kernel(&mut rng, grid, n, 1.0);
    let f = random_vector_field(&mut rng, grid, n);
    let nested = nested_commutator(&op, &b, &f)?;
    Ok(vec![
        Observation::error(cfg, "expansion", nested.relative_distance(&expand_commutator(&op, &b, &f)?)),
        Observation::error(cfg, "psi_factorization", nested.relative_distance(&psi_factorization(&op, &b, &f)?)),
    ])
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn phi(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = small_grid(cfg, if cfg.d == 1 { 3 } else { 2 })?;
    let n = rng.gen_range(1..=cfg.n);
    let p = pick(&mut rng, &cfg.p);
    let u = random_weight(&mut rng, grid, n, cfg.amplitude);
    let v = random_weight(&mut rng, grid, n, cfg.amplitude);
    let op = random_kernel(&mut rng, grid, n, 1.0);
    let f = random_vector_field(&mut rng, grid, n);
    let cells = grid.cells();
    let (ur, vr) = (u.power_field(-1.0 / p), v.power_field(1.0 / p));
    let mut inv_err = 0.0f64;

    // matrix symbols, m ≤ 3
    let m = rng.gen_range(1..=3);
    let b = random_symbols(&mut rng, grid, n, m, cfg.amplitude);
    let ctx = PhiContext::MatrixSymbol { b: &b, u: &u, v: &v, p };
    for c in 0..cells {
        let (ph, inv) = phi_blocks(&ctx, c)?;
        inv_err = inv_err.max((&(&ph * &inv) - &Matrix::identity(ph.rows())).max_abs());
    }
    let direct = vr.apply(&expand_commutator(&op, &b, &ur.apply(&f))?);
    let mut top = conjugated_operator_block(&op, &ctx, &f)?.relative_distance(&direct);

    // scalar powers, m ≤ 4
    let ms = rng.gen_range(1..=4);
    let bs = random_scalar_symbol(&mut rng, grid, cfg.amplitude);
    let sctx = PhiContext::ScalarPower { b: &bs, m: ms, u: &u, v: &v, p };
    let blocks: Vec<(Matrix, Matrix)> = (0..cells).map(|c| phi_blocks(&sctx, c)).collect::<Result<_>>()?;
    let w = |i: usize, c: usize, s: f64| if i < ms { v.cell(c).power(s) } else { u.cell(c).power(s) };
    let mut binom = 0.0f64;
    for x in 0..cells {
        inv_err = inv_err.max((&(&blocks[x].0 * &blocks[x].1) - &Matrix::identity(blocks[x].0.rows())).max_abs());
        for y in 0..cells {
            let prod = &blocks[x].0 * &blocks[y].1;
            for i in 0..=ms {
                for j in 0..=ms {
                    let blk = prod.block(i * n, j * n, n, n);
                    let want = if j < i {
                        Matrix::zeros(n, n)
                    } else {
                        (w(i, x, 1.0 / p).matrix() * w(j, y, -1.0 / p).matrix()).scale((bs.get(x) - bs.get(y)).powi((j - i) as i32) / factorial(j - i))
                    };
                    binom = binom.max((&blk - &want).max_abs() / want.max_abs().max(1.0));
                }
            }
        }
    }
    let bi = MatrixField::from_fn(grid, n, |c| Matrix::identity(n).scale(bs.get(c)));
    let bb = crate::tuples::SymbolVector::new(vec![bi; ms])?;
    let direct = vr.apply(&nested_commutator(&op, &bb, &ur.apply(&f))?).scale(1.0 / factorial(ms));
    top = top.max(conjugated_operator_block(&op, &sctx, &f)?.relative_distance(&direct));
    Ok(vec![
        Observation::error(cfg, "phi_inverse", inv_err),
        Observation::error(cfg, "phi_top_right", top),
        Observation::error(cfg, "phi_binomial", binom),
    ])
}

fn certificates(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = small_grid(cfg, if cfg.d == 1 { 4 } else { 2 })?;
    let n = rng.gen_range(1..=cfg.n);
    let m = rng.gen_range(0..=3);
    let r = pick(&mut rng, &[1.0, 2.0]);
    let matrix_kernels = rng.gen_bool(0.5);
    let model = random_sparse_model(&mut rng, grid, matrix_kernels.then_some(n), r);
    let op = GridOperator::Sparse(model.clone());
    let b = random_symbols(&mut rng, grid, n, m, cfg.amplitude);
    let f = random_vector_field(&mut rng, grid, n);

    let cert = build_p1_certificate(&op, &f, 0.5, r)?;
    let verified = verify_certificate(&cert, &op, &f)?.pass;
    let cd = commutator_domination(&cert, &b, &f)?;
    let err = cd.value.relative_distance(&nested_commutator(&op, &b, &f)?);
    let diag = cd.diagonal == !matrix_kernels && DominationCertificate::tautological(&model).model.is_scalar() == !matrix_kernels;

    // stopping-time builder on a lifted scalar kernel, applied to Ψ̃f
    let lift = random_lift(&mut rng, grid, 1.0);
    let stacked = {
        let psis = (0..grid.cells()).map(|c| psi_matrices(&b, c)).collect::<Result<Vec<_>>>()?;
        let k = psis[0].1.rows();
        VectorField::new(grid, k, (0..grid.cells()).flat_map(|c| psis[c].1.matvec(f.at(c))).collect())?
    };
    let eps = pick(&mut rng, &[0.25, 0.5]);
    let built = build_p1_certificate(&lift, &stacked, eps, r)?;
    let built_ok = verify_certificate(&built, &lift, &stacked)?.pass && built.model.is_scalar();

    Ok(vec![
        Observation::flag("certificate_verify", verified),
        Observation::error(cfg, "commutator_domination", err),
        Observation::flag("diagonal_preservation", diag),
        Observation::flag("builder_verify", built_ok),
    ])
}

fn conjugation(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let n = rng.gen_range(1..=cfg.n);
    let p = pick(&mut rng, &cfg.p);
    let u = random_weight(&mut rng, grid, n, cfg.amplitude);
    let v = random_weight(&mut rng, grid, n, cfg.amplitude);
    let a = random_invertible(&mut rng, n);
    let cubes = grid.all_cubes();
    let i_cube = cubes[rng.gen_range(0..cubes.len())];

    let base = ap_characteristic(&v, None, p)?.value;
    let global = ap_characteristic(&conjugate_weight(&v, p, &Conjugation::Global(a))?, None, p)?.value;
    let vi = conjugate_weight(&v, p, &Conjugation::Localized { u: &u, cube: i_cube })?;
    let local = ap_characteristic(&vi, None, p)?.value;
    let inv_err = (global - base).abs().max((local - base).abs()) / base;

    // ‖R_{Q,q,V_I}‖ against ‖R_{Q,p,V}R_{I,p,U}^{-1}‖^{p/q} over all cubes Q
    let q = pick(&mut rng, &cfg.p);
    let ri = Reducer::new(&u, p).primal(&i_cube).inverse();
    let (rv, rvi) = (Reducer::new(&v, p), Reducer::new(&vi, q));
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for cube in &cubes {
        let num = rvi.primal(cube).op_norm();
        let den = (rv.primal(cube).matrix() * ri.matrix()).op_norm().powf(p / q);
        let t = num / den;
        lo = lo.min(t);
        hi = hi.max(t);
    }
    let chars = Characteristics::of(&u, &v, p)?;
    Ok(vec![
        Observation::error(cfg, "ap_conjugation_invariance", inv_err),
        // the band is symmetric: record both ends as one ratio max/min pair
        Observation::ratio("localized_reducing_ratio", hi, Some(chars)),
        Observation::ratio("localized_reducing_ratio", lo, Some(chars)),
    ])
}

fn lemma_a(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let n = rng.gen_range(1..=cfg.n);
    let m = rng.gen_range(0..=2);
    let p = pick(&mut rng, &cfg.p);
    let family = random_family(&mut rng, grid, 0.5);
    let u = random_weight(&mut rng, grid, n, cfg.amplitude);
    let v = random_weight(&mut rng, grid, n, cfg.amplitude);
    let b = random_symbols(&mut rng, grid, n, m, cfg.amplitude);
    let f = random_vector_field(&mut rng, grid, n);
    let g = random_vector_field(&mut rng, grid, n);
    let (pm, rm) = reducing_choices(&family, &u, &v, p);
    let a = lemma_a_audit(&family, &u, &v, p, &b, &f, &g, 2.0, 2.0, &pm, &rm)?;
    Ok(vec![Observation::bound(cfg, "lemma_a", a.lhs.upper, a.rhs)])
}

fn norm(kind: BmoKind, b: &crate::tuples::SymbolVector, sigma: &Tuple, u: &MatrixWeight, v: &MatrixWeight, p: f64) -> Result<f64> {
    Ok(bmo_norm(&BmoRequest { kind, symbols: BmoSymbols::Matrix { b, sigma }, u, v, p })?.value)
}

fn snorm(kind: BmoKind, b: &ScalarField, j: u32, u: &MatrixWeight, v: &MatrixWeight, p: f64) -> Result<f64> {
    Ok(bmo_norm(&BmoRequest { kind, symbols: BmoSymbols::Scalar { b, j }, u, v, p })?.value)
}

fn sub_duality(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let n = rng.gen_range(1..=cfg.n);
    let m = rng.gen_range(1..=cfg.m.max(1));
    let p = pick(&mut rng, &cfg.p);
    let u = random_weight(&mut rng, grid, n, cfg.amplitude);
    let v = random_weight(&mut rng, grid, n, cfg.amplitude);
    let b = random_symbols(&mut rng, grid, n, m, cfg.amplitude);
    let sigma = random_theta(&mut rng, m);
    let (bs, pp) = (b.adjoint(), conjugate_exponent(p));
    let (ud, vd) = (u.dual_weight(p), v.dual_weight(p));
    let rel = |a: f64, c: f64| (a - c).abs() / a.abs().max(c.abs()).max(f64::MIN_POSITIVE);
    let e1 = rel(norm(BmoKind::Sub1, &b, &sigma, &u, &v, p)?, norm(BmoKind::Sub2Star, &bs, &sigma, &vd, &ud, pp)?);
    let e2 = rel(norm(BmoKind::Sub2, &b, &sigma, &u, &v, p)?, norm(BmoKind::Sub1Star, &bs, &sigma, &vd, &ud, pp)?);
    Ok(vec![Observation::error(cfg, "sub1_duality", e1), Observation::error(cfg, "sub2_duality", e2)])
}

/// `sup_θ ⟨u_θ,g⟩/h(u_θ)` in the plane: a 3600-angle scan refined by golden section.
fn sweep_gauge(f: &[Vec<f64>], g: &[f64], r: f64) -> f64 {
    let val = |t: f64| {
        let u = [t.cos(), t.sin()];
        let h = support_function(f, &u, r);
        let num = u[0] * g[0] + u[1] * g[1];
        if h > 0.0 {
            num / h
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    let steps = 3600;
    let hstep = std::f64::consts::TAU / steps as f64;
    let (mut best_t, mut best) = (0.0, f64::NEG_INFINITY);
    for k in 0..steps {
        let t = k as f64 * hstep;
        let v = val(t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    let (mut a, mut b) = (best_t - hstep, best_t + hstep);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let (c, d) = (b - phi * (b - a), a + phi * (b - a));
        if val(c) > val(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(val(0.5 * (a + b)))
}

fn membership(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let k = rng.gen_range(3..=8);
    let f: Vec<Vec<f64>> = (0..k).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let r0 = pick(&mut rng, &[1.0, 2.0]);
    let mut phi: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = mean_norm(&phi, conjugate_exponent(r0));
    phi.iter_mut().for_each(|x| *x /= s);
    let rho = rng.gen_range(0.5..2.0);
    let g: Vec<f64> = (0..2).map(|i| rho * phi.iter().zip(&f).map(|(a, fk)| a * fk[i]).sum::<f64>() / k as f64).collect();

    let band = 1e-8;
    let mut agree = true;
    let mut gauges = [0.0; 2];
    for (slot, r) in [1.0, 2.0].into_iter().enumerate() {
        let cert = convex_membership(&f, &g, r)?;
        let sweep = sweep_gauge(&f, &g, r);
        gauges[slot] = cert.norm;
        if (cert.norm - 1.0).abs() > band && cert.member != (sweep <= 1.0) {
            agree = false;
        }
    }
    // ⟪f⟫_1 ⊆ ⟪f⟫_2, so the r = 2 gauge is the smaller one
    Ok(vec![Observation::flag("membership_agreement", agree), Observation::bound(cfg, "membership_nesting", gauges[1], gauges[0])])
}

// ---------------------------------------------------------------- ratio suites

fn bmo_ratios(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let n = rng.gen_range(1..=cfg.n);
    let m = rng.gen_range(1..=cfg.m);
    let p = pick(&mut rng, &cfg.p);
    let u = random_weight(&mut rng, grid, n, cfg.amplitude);
    let v = random_weight(&mut rng, grid, n, cfg.amplitude);
    let b = random_symbols(&mut rng, grid, n, m, cfg.amplitude);
    let sigma = random_theta(&mut rng, m);
    let chars = Characteristics::of(&u, &v, p)?;
    let (bs, pp) = (b.adjoint(), conjugate_exponent(p));
    let (ud, vd) = (u.dual_weight(p), v.dual_weight(p));
    let k = sigma.len() as f64;

    let red = norm(BmoKind::Red, &b, &sigma, &u, &v, p)?;
    let red_star = norm(BmoKind::RedStar, &bs, &sigma, &vd, &ud, pp)?;
    let r1 = red / (chars.v_ap.powf(1.0 / (k * p)) * red_star);
    let r2 = red_star / (chars.u_ap.powf(1.0 / (k * p)) * red);

    let tilde = norm(BmoKind::Tilde, &b, &sigma, &u, &v, p)?;
    let (mut sum_p, mut sum_1) = (0.0, 0.0);
    for alpha in sigma.subtuples() {
        let rest = sigma.minus(&alpha)?;
        let s1 = norm(BmoKind::Sub1, &b, &alpha, &u, &v, p)?;
        let s2 = norm(BmoKind::Sub2Star, &b, &rest, &u, &v, p)?;
        sum_p += s1.powf(p) * s2.powf(p);
        sum_1 += s1 * s2;
    }
    let c = chars.uv_ap.powf(1.0 / p);
    Ok(vec![
        Observation::ratio("red_over_red_star", r1, Some(chars)),
        Observation::ratio("red_star_over_red", r2, Some(chars)),
        Observation::ratio("tilde_over_sub_products", tilde / (c * sum_p), Some(chars)),
        Observation::ratio("tilde_over_sub_products_exp1", tilde / (c * sum_1), Some(chars)),
    ])
}

fn strong_jn(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let n = rng.gen_range(1..=cfg.n);
    let j = rng.gen_range(1..=3u32);
    let p = pick(&mut rng, &cfg.p);
    let u = random_weight(&mut rng, grid, n, cfg.amplitude);
    let v = random_weight(&mut rng, grid, n, cfg.amplitude);
    let b = random_scalar_symbol(&mut rng, grid, cfg.amplitude);
    let chars = Characteristics::of(&u, &v, p)?;
    let pp = conjugate_exponent(p);
    let base = snorm(BmoKind::ScalarJ, &b, j, &u, &v, p)?.powf(j as f64 * p);
    let q1 = snorm(BmoKind::ScalarJ1, &b, j, &u, &v, p)?.powf(p);
    let q2 = snorm(BmoKind::ScalarJ2, &b, j, &u, &v, p)?.powf(pp);
    let q3 = snorm(BmoKind::ScalarTildeJ, &b, j, &u, &v, p)?;
    let q4 = snorm(BmoKind::ScalarTildeJ2, &b, j, &u, &v, p)?;
    Ok(vec![
        Observation::ratio("jn_j1_over_j", q1 / base, Some(chars)),
        Observation::ratio("jn_j2_over_j", q2 / base, Some(chars)),
        Observation::ratio("jn_tilde_over_j", q3 / base, Some(chars)),
        Observation::ratio("jn_tilde2_over_j", q4 / base, Some(chars)),
    ])
}

fn bloom(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let n = rng.gen_range(1..=cfg.n);
    let j = rng.gen_range(1..=3u32);
    let p = pick(&mut rng, &cfg.p);
    let u = random_scalar_weight(&mut rng, grid, n, cfg.amplitude);
    let v = random_scalar_weight(&mut rng, grid, n, cfg.amplitude);
    let b = random_scalar_symbol(&mut rng, grid, cfg.amplitude);
    let chars = Characteristics::of(&u, &v, p)?;
    let t = snorm(BmoKind::ScalarJ, &b, j, &u, &v, p)? / snorm(BmoKind::Bloom, &b, j, &u, &v, p)?;
    Ok(vec![Observation::ratio("bloom_ratio", t, Some(chars))])
}

fn reverse_holder(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let n = rng.gen_range(1..=cfg.n);
    let p = pick(&mut rng, &cfg.p);
    let w = random_weight(&mut rng, grid, n, cfg.amplitude);
    let a = if rng.gen_bool(0.5) { Matrix::identity(n) } else { random_invertible(&mut rng, n) };
    let c = sc_ainfty(&w, p, &DirectionPlan::Standard)?.value;
    let r = reverse_holder_exponent(grid.d, c);
    let mut worst = 0.0f64;
    for q in grid.all_cubes() {
        worst = worst.max(rhi_ratio(&w, p, &a, &q, r)?);
    }
    let chars = Characteristics::of(&w, &w, p)?;
    Ok(vec![Observation::ratio("reverse_holder", worst, Some(chars))])
}

fn weight_ratios(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let n = rng.gen_range(1..=cfg.n);
    let p = pick(&mut rng, &cfg.p);
    let u = random_weight(&mut rng, grid, n, cfg.amplitude);
    let v = random_weight(&mut rng, grid, n, cfg.amplitude);
    let chars = Characteristics::of(&u, &v, p)?;
    let pp = conjugate_exponent(p);
    let dual = ap_characteristic(&u.dual_weight(p), None, pp)?.value;
    let vu = ap_characteristic(&v, Some(&u), p)?.value;
    let c = sc_ainfty(&u, p, &DirectionPlan::Standard)?.value.max(sc_ainfty(&v.dual_weight(p), pp, &DirectionPlan::Standard)?.value);
    let r = reverse_holder_exponent(grid.d, c);
    let pow = ap_characteristic(&u.power_weight(r), Some(&v.power_weight(r)), p * r)?.value;
    Ok(vec![
        Observation::ratio("ap_duality_ratio", chars.u_ap.powf(1.0 / p) / dual.powf(1.0 / pp), Some(chars)),
        Observation::ratio("ap_chain_ratio", chars.u_ap / (chars.uv_ap * vu), Some(chars)),
        Observation::ratio("ap_power_ratio", pow / chars.uv_ap.powf(r), Some(chars)),
    ])
}

fn monotonicity(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let n = rng.gen_range(1..=cfg.n);
    let u = random_weight(&mut rng, grid, n, cfg.amplitude);
    let v = random_weight(&mut rng, grid, n, cfg.amplitude);
    let p = pick(&mut rng, &cfg.p);
    let q = p * rng.gen_range(1.05..3.0);
    let lo = ap_characteristic(&u, Some(&v), q)?.value;
    let hi = ap_characteristic(&u, Some(&v), p)?.value;
    Ok(vec![Observation::bound(cfg, "ap_monotonicity", lo, hi)])
}

fn orlicz_holder(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let spike = |rng: &mut InstanceRng| {
        let x: f64 = rng.gen_range(0.0..1.0);
        if rng.gen_bool(0.1) {
            x * 20.0
        } else {
            x
        }
    };
    let f = ScalarField::new(grid, (0..grid.cells()).map(|_| spike(&mut rng)).collect())?;
    let g = ScalarField::new(grid, (0..grid.cells()).map(|_| spike(&mut rng)).collect())?;
    let a = rng.gen_range(1.2..4.0);
    let (phi, psi) = match rng.gen_range(0..3) {
        0 => (YoungFunction::power(a)?, YoungFunction::power(conjugate_exponent(a))?),
        1 => (YoungFunction::power_log(a, 1.0)?, YoungFunction::power(conjugate_exponent(a))?),
        _ => (YoungFunction::power_log(1.0, 1.0)?, YoungFunction::power(a)?),
    };
    let cubes = grid.all_cubes();
    let q = cubes[rng.gen_range(0..cubes.len())];
    let h = orlicz_holder_check(&f, &g, &phi, &psi, &q)?;
    Ok(vec![Observation::bound(cfg, "orlicz_holder", h.lhs, h.rhs)])
}

fn integral_domination(cfg: &AuditConfig, seed: u64) -> Result<Vec<Observation>> {
    let mut rng = rng_from_seed(seed);
    let grid = cfg.grid()?;
    let n = rng.gen_range(1..=cfg.n);
    let m = rng.gen_range(0..=cfg.m.min(2));
    let model = random_sparse_model(&mut rng, grid, None, 2.0);
    let op = GridOperator::Sparse(model.clone());
    let cert = DominationCertificate::tautological(&model);
    let b = random_symbols(&mut rng, grid, n, m, cfg.amplitude);
    let f = random_vector_field(&mut rng, grid, n);
    let g = random_vector_field(&mut rng, grid, n);
    let lhs = integral_lhs(&op, &b, &f, &g)?;
    let rhs = cert.constant * integral_bound_rhs(&cert.family(), &b, &f, &g, 2.0, 2.0)?.upper;
    Ok(vec![Observation::ratio("integral_domination", lhs / rhs, None)])
}
