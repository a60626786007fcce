//! Library of seed-data constructors with certified exponent classes.
//!
//! Every constructor measures the weighted tame norms of what it built and
//! declares the seed's (ε_G, ε_M) from the measurement, so the tame
//! invariants hold by construction.  Radial power-law profiles use the
//! mollified radius ρ (smooth, bounded below), so all fields are globally
//! smooth and the asymptotics are unchanged.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::elliptic::{solve_poisson, PoissonProblem};
use crate::error::{Error, Result};
use crate::grid::{
    fd_derivative, radius_field, sym_index, GridSpec, ScalarField, SymTensorField, VectorField,
};
use crate::operators::constraint::constraint_with;
use crate::variational::{ExponentSet, SeedData};

/// Serializable recipe for constructing a seed (the CLI's JSON surface).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedRecipe {
    Flat,
    Schwarzschild { m: f64 },
    Class26 { amplitude: f64, p_g: f64 },
    RandomTame { amplitude: f64, defect: f64, rng_seed: u64 },
}

impl SeedRecipe {
    pub fn build(&self, spec: GridSpec) -> Result<SeedData> {
        match *self {
            SeedRecipe::Flat => Ok(flat_seed(spec)),
            SeedRecipe::Schwarzschild { m } => schwarzschild_seed(spec, m),
            SeedRecipe::Class26 { amplitude, p_g } => class26_seed(spec, amplitude, p_g),
            SeedRecipe::RandomTame { amplitude, defect, rng_seed } => {
                random_tame_seed(spec, ExponentSet::default(), amplitude, defect, rng_seed)
            }
        }
    }
}

/// Re-declare a seed's smallness parameters from its measured norms, so the
/// declared (ε_G, ε_M) match the construction to rounding.
fn declare_measured(mut seed: SeedData) -> Result<SeedData> {
    let n = seed.tame_norms()?;
    seed.exps.eps_g = n.metric.max(n.extrinsic).clamp(1e-9, 0.99);
    seed.exps.eps_m = n.h_defect.max(n.m_defect).clamp(1e-9, 0.99);
    Ok(seed)
}

/// The exact flat background (δ, 0) with vacuum targets.
pub fn flat_seed(spec: GridSpec) -> SeedData {
    SeedData::new(
        SymTensorField::euclidean(spec),
        SymTensorField::zeros(spec),
        ScalarField::zeros(spec),
        VectorField::zeros(spec),
        ExponentSet::default(),
    )
    .expect("flat seed is always valid")
}

/// Time-symmetric isotropic Schwarzschild data of mass `m`:
/// g₁ = (1 + m/2ρ)⁴ δ, h₁ = 0, vacuum targets.
pub fn schwarzschild_seed(spec: GridSpec, m: f64) -> Result<SeedData> {
    if !(m > 0.0) {
        return Err(Error::Config(format!("Schwarzschild mass must be positive, got {m}")));
    }
    if m > spec.r_outer / 2.0 {
        return Err(Error::Config(format!(
            "Schwarzschild mass {m} too large for domain radius {}: the m/r tail would not \
             be small anywhere on the grid",
            spec.r_outer
        )));
    }
    let rho = radius_field(spec);
    let mut g1 = SymTensorField::zeros(spec);
    for d in 0..3 {
        let c = sym_index(d, d);
        for (i, v) in g1.comps[c].data.iter_mut().enumerate() {
            let phi = 1.0 + 0.5 * m / rho.field.data[i];
            *v = phi.powi(4);
        }
    }
    let exps = ExponentSet { p_g: 1.0, ..Default::default() };
    let seed = SeedData::new(
        g1,
        SymTensorField::zeros(spec),
        ScalarField::zeros(spec),
        VectorField::zeros(spec),
        exps,
    )?;
    declare_measured(seed)
}

/// The §-class strongly tame seed: g₁ = 2v dx¹dx² + (1+u)Σ(dxⁱ)² with u the
/// decaying solution of Δu = ∂₁∂₂v, h₁ = 0, vacuum targets.  The profile is
/// v = A·ρ^{−p_G}·(x₁x₂/ρ²), a smooth quadrupole with the requested decay.
pub fn class26_seed(spec: GridSpec, amplitude: f64, p_g: f64) -> Result<SeedData> {
    if !(p_g > 0.5 && p_g <= 1.0) {
        return Err(Error::Config(format!("class26 requires p_G ∈ (1/2, 1], got {p_g}")));
    }
    let v = ScalarField::from_fn(spec, |x| {
        let r = crate::grid::radius_of(x);
        amplitude * r.powf(-p_g) * (x[0] * x[1] / (r * r))
    });
    // Δu = ∂₁∂₂v, u decaying like ρ^{−p_G}: the solver inverts −Δ
    let mut e = fd_derivative(&v, [1, 1, 0])?;
    e.scale(-1.0);
    let u = solve_poisson(&PoissonProblem { e, theta_bc: p_g })?;
    let mut g1 = SymTensorField::euclidean(spec);
    for d in 0..3 {
        g1.comps[sym_index(d, d)].axpy(1.0, &u);
    }
    // packed component (0,1) carries g_12 = v
    g1.comps[sym_index(0, 1)].axpy(1.0, &v);
    let exps = ExponentSet { p_g, p_m: 2.0 * p_g, ..Default::default() };
    let seed = SeedData::new(
        g1,
        SymTensorField::zeros(spec),
        ScalarField::zeros(spec),
        VectorField::zeros(spec),
        exps,
    )?;
    declare_measured(seed)
}

/// Band-limited trigonometric polynomial with coefficients in [−1, 1].
fn band_limited(spec: GridSpec, rng: &mut impl Rng) -> ScalarField {
    let base = std::f64::consts::PI / spec.r_outer;
    let modes: Vec<([f64; 3], f64, f64)> = (0..4)
        .map(|_| {
            let k = [
                base * rng.gen_range(1..=2) as f64,
                base * rng.gen_range(1..=2) as f64,
                base * rng.gen_range(1..=2) as f64,
            ];
            (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-0.5..0.5))
        })
        .collect();
    ScalarField::from_fn(spec, |x| {
        modes
            .iter()
            .map(|(k, phase, a)| a * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + phase).sin())
            .sum()
    })
}

/// Random seed inside the declared tame envelopes: band-limited symmetric
/// perturbations with r^{−p_G} / r^{−q_G} envelopes, and matter targets set
/// to G(g₁,h₁) plus a compact defect of relative size `defect`, so the tame
/// bounds hold by construction.  Same `rng_seed` ⇒ bit-identical fields.
pub fn random_tame_seed(
    spec: GridSpec,
    exps: ExponentSet,
    amplitude: f64,
    defect: f64,
    rng_seed: u64,
) -> Result<SeedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let rho = radius_field(spec);
    let env_g = rho.pow(-exps.p_g);
    let env_h = rho.pow(-exps.q_g);
    let mut g1 = SymTensorField::euclidean(spec);
    let mut h1 = SymTensorField::zeros(spec);
    for c in 0..6 {
        let mut pg = band_limited(spec, &mut rng);
        pg.mul_assign_field(&env_g);
        pg.scale(amplitude);
        g1.comps[c].axpy(1.0, &pg);
        let mut ph = band_limited(spec, &mut rng);
        ph.mul_assign_field(&env_h);
        ph.scale(amplitude);
        h1.comps[c].axpy(1.0, &ph);
    }
    let g1 = crate::operators::geometry::geometry(g1)?;
    let (ham, mom) = constraint_with(&g1, &h1);
    // compact random defect on top of the exact constraint values
    let dir: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let bump = ScalarField::from_fn(spec, |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        (-r2 / 4.0).exp()
    });
    let mut h_star = ham;
    let mut scaled = bump.clone();
    scaled.scale(defect * dir[0]);
    h_star.axpy(1.0, &scaled);
    let mut m_star = mom;
    for c in 0..3 {
        let mut s = bump.clone();
        s.scale(defect * dir[c + 1]);
        m_star.comps[c].axpy(1.0, &s);
    }
    let seed = SeedData { g1, h1, h_star, m_star, exps };
    declare_measured(seed)
}
