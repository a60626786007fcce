//! Decay-exponent bookkeeping and class validation.
//!
//! Four exponent pairs govern the method: the geometry pair (p_G, q_G) and
//! matter pair (p_M, q_M) describe the seed data, the effective pair (p, q)
//! drives the linearized solve's weights, and the super-critical pair
//! (p⋆, q⋆) describes the decay of the solution relative to the effective
//! seed.  `check_exponents` validates a requested class and reports each
//! inequality by name instead of throwing.

/// The complete set of decay exponents and smallness parameters for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentSet {
    /// Geometry decay exponents: g₁ − e decays like r^{−p_G}, h₁ like r^{−q_G}.
    pub p_g: f64,
    pub q_g: f64,
    /// Matter (constraint-defect) decay exponents.
    pub p_m: f64,
    pub q_m: f64,
    /// Effective exponents used in the linearized solve's weights.
    pub p: f64,
    pub q: f64,
    /// Super-critical effective exponents for the effective-seed decay.
    pub p_star: f64,
    pub q_star: f64,
    /// Smallness of the geometry perturbation.
    pub eps_g: f64,
    /// Smallness of the constraint defect.
    pub eps_m: f64,
}

impl Default for ExponentSet {
    /// A strongly tame configuration with the standard effective choice
    /// (p, q) = (1/2, 3/2) and super-critical targets (p⋆, q⋆) = (1.25, 2.25).
    fn default() -> Self {
        ExponentSet {
            p_g: 0.8,
            q_g: 1.5,
            p_m: 1.6,
            q_m: 2.25,
            p: 0.5,
            q: 1.5,
            p_star: 1.25,
            q_star: 2.25,
            eps_g: 0.05,
            eps_m: 0.05,
        }
    }
}

/// Exponent classes that can be validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentClass {
    /// 1/2 ≤ p ≤ 2(q − 1) for each declared pair.
    Admissible,
    /// (p, q) sub-critical, ≤ (p_M, q_M), and |q − p − 1| ≤ q_G − 1.
    SubcriticalEffective,
    /// p_M ≥ 1, q_M ≥ 2, q_M > max(3 − q_G, 3/2).
    StronglyTame,
    /// The (p⋆, q⋆) inequalities of the strongly tame regime.
    SupercriticalEffective,
}

/// One named inequality and whether it holds.
#[derive(Debug, Clone)]
pub struct ExponentCheck {
    pub name: String,
    pub pass: bool,
}

/// Validation report: every inequality of the requested class, by name.
#[derive(Debug, Clone)]
pub struct ExponentReport {
    pub class: ExponentClass,
    pub checks: Vec<ExponentCheck>,
}

impl ExponentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Names of the violated inequalities.
    pub fn violations(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }
}

fn check(checks: &mut Vec<ExponentCheck>, name: impl Into<String>, pass: bool) {
    checks.push(ExponentCheck { name: name.into(), pass });
}

fn admissible_pair(checks: &mut Vec<ExponentCheck>, label: &str, p: f64, q: f64) {
    check(checks, format!("1/2 ≤ {label}.p  ({p})"), 0.5 <= p);
    check(checks, format!("{label}.p ≤ 2({label}.q − 1)  ({p} vs {})", 2.0 * (q - 1.0)), {
        p <= 2.0 * (q - 1.0)
    });
}

/// Validate `exps` against the inequalities defining `class`.
///
/// Reports, never throws: each inequality appears with its evaluated numbers
/// so a failing configuration names the violated bound.
pub fn check_exponents(exps: &ExponentSet, class: ExponentClass) -> ExponentReport {
    let mut checks = Vec::new();
    let e = exps;
    match class {
        ExponentClass::Admissible => {
            admissible_pair(&mut checks, "(p_G,q_G)", e.p_g, e.q_g);
            admissible_pair(&mut checks, "(p_M,q_M)", e.p_m, e.q_m);
            admissible_pair(&mut checks, "(p,q)", e.p, e.q);
            for (name, v) in [("ε_G", e.eps_g), ("ε_M", e.eps_m)] {
                check(&mut checks, format!("{name} ∈ (0,1)  ({v})"), 0.0 < v && v < 1.0);
            }
        }
        ExponentClass::SubcriticalEffective => {
            admissible_pair(&mut checks, "(p,q)", e.p, e.q);
            check(&mut checks, format!("p < 1 (sub-critical)  ({})", e.p), e.p < 1.0);
            check(&mut checks, format!("q < 2 (sub-critical)  ({})", e.q), e.q < 2.0);
            check(&mut checks, format!("p ≤ p_M  ({} vs {})", e.p, e.p_m), e.p <= e.p_m);
            check(&mut checks, format!("q ≤ q_M  ({} vs {})", e.q, e.q_m), e.q <= e.q_m);
            check(
                &mut checks,
                format!("|q − p − 1| ≤ q_G − 1  ({} vs {})", (e.q - e.p - 1.0).abs(), e.q_g - 1.0),
                (e.q - e.p - 1.0).abs() <= e.q_g - 1.0,
            );
        }
        ExponentClass::StronglyTame => {
            check(&mut checks, format!("p_M ≥ 1  ({})", e.p_m), e.p_m >= 1.0);
            check(&mut checks, format!("q_M ≥ 2  ({})", e.q_m), e.q_m >= 2.0);
            let bound = (3.0 - e.q_g).max(1.5);
            check(
                &mut checks,
                format!("q_M > max(3 − q_G, 3/2)  ({} vs {bound})", e.q_m),
                e.q_m > bound,
            );
        }
        ExponentClass::SupercriticalEffective => {
            check(&mut checks, format!("1 ≤ p⋆  ({})", e.p_star), 1.0 <= e.p_star);
            check(&mut checks, format!("2 ≤ q⋆  ({})", e.q_star), 2.0 <= e.q_star);
            check(&mut checks, format!("p⋆ ≤ p_M  ({} vs {})", e.p_star, e.p_m), e.p_star <= e.p_m);
            check(&mut checks, format!("q⋆ ≤ q_M  ({} vs {})", e.q_star, e.q_m), e.q_star <= e.q_m);
            let pb = (e.p_g + 1.0).min(e.q_g + e.q_m - 2.0);
            check(
                &mut checks,
                format!("p⋆ ≤ min(p_G + 1, q_G + q_M − 2)  ({} vs {pb})", e.p_star),
                e.p_star <= pb,
            );
            let ps = 2.0_f64.min(e.q_g);
            check(
                &mut checks,
                format!("p⋆ < min(2, q_G)  ({} vs {ps})", e.p_star),
                e.p_star < ps,
            );
            let qb = (e.p_g + 2.0).min(e.q_g + 1.0);
            check(
                &mut checks,
                format!("q⋆ ≤ min(p_G + 2, q_G + 1)  ({} vs {qb})", e.q_star),
                e.q_star <= qb,
            );
            check(&mut checks, format!("q⋆ < 3  ({})", e.q_star), e.q_star < 3.0);
        }
    }
    ExponentReport { class, checks }
}
