//! reservation-utility fixed points. both the post-treatment and
//! pre-treatment Bellman equations reduce to w = base + k * E(w) where
//! E(w) is the mean excess of the offer distribution above w. E is
//! non-increasing in w with slope in (-1, 0], so the residual
//! F(w) = w - base - k * E(w) is strictly increasing and F(base) <= 0,
//! which makes bracketing bisection globally convergent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{DdcConfig, ExpectationMode};
use crate::error::{Result, SurvError};

/// bisection stops once the bracket is narrower than this.
const STEP_TOL: f64 = 1e-10;
/// combined cap on expansion and bisection steps.
const MAX_ITERS: u32 = 10_000;

/// one solved reservation value with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solved {
    pub value: f64,
    pub iterations: u32,
    /// propagated Monte-Carlo standard error; absent in analytic mode
    pub mc_se: Option<f64>,
}

/// reservation values for one (ability, effort) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReservationCell {
    pub a: u32,
    pub e: u32,
    /// post-treatment reservation; never depends on treatment probabilities
    pub w_post: Solved,
    /// pre-treatment reservation per regime
    pub w_pre: [Solved; 2],
    /// sign of (w_post - pre-treatment reservation at zero treatment
    /// probability); the pre-treatment reservation moves monotonically
    /// toward w_post as the treatment probability rises, so this is the
    /// direction of that drift. zero when the gap is below 1e-8.
    pub value_direction: i8,
}

/// reservation values over the full (ability, effort) grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReservationTable {
    a_min: u32,
    a_max: u32,
    e_min: u32,
    e_max: u32,
    cells: Vec<ReservationCell>,
}

impl ReservationTable {
    pub fn cell(&self, a: u32, e: u32) -> Option<&ReservationCell> {
        if a < self.a_min || a > self.a_max || e < self.e_min || e > self.e_max {
            return None;
        }
        let n_e = (self.e_max - self.e_min + 1) as usize;
        let ix = (a - self.a_min) as usize * n_e + (e - self.e_min) as usize;
        self.cells.get(ix)
    }

    pub fn cells(&self) -> &[ReservationCell] {
        &self.cells
    }

    /// mutable access for counterfactual experiments that pin reservation
    /// values by hand before simulating.
    pub fn cells_mut(&mut self) -> &mut [ReservationCell] {
        &mut self.cells
    }
}

/// offer mean-excess engine. the empirical variant freezes its draws at
/// construction so every residual evaluation within a solve sees the
/// same sample.
enum Excess {
    Analytic { mu: f64, sigma: f64 },
    Empirical { draws: Vec<f64> },
}

impl Excess {
    fn value(&self, w: f64) -> f64 {
        match self {
            Excess::Analytic { mu, sigma } => {
                let std = Normal::new(0.0, 1.0).expect("unit normal");
                let zeta = (w - mu) / sigma;
                (sigma * (std.pdf(zeta) - zeta * (1.0 - std.cdf(zeta)))).max(0.0)
            }
            Excess::Empirical { draws } => {
                let total: f64 = draws.iter().map(|d| (d - w).max(0.0)).sum();
                total / draws.len() as f64
            }
        }
    }

    /// standard error of the excess estimate and the upper-tail mass at w.
    /// the analytic engine has no sampling error.
    fn se_and_tail(&self, w: f64) -> (Option<f64>, f64) {
        match self {
            Excess::Analytic { mu, sigma } => {
                let std = Normal::new(0.0, 1.0).expect("unit normal");
                (None, 1.0 - std.cdf((w - mu) / sigma))
            }
            Excess::Empirical { draws } => {
                let m = draws.len() as f64;
                let mean = self.value(w);
                let var: f64 = draws
                    .iter()
                    .map(|d| {
                        let x = (d - w).max(0.0) - mean;
                        x * x
                    })
                    .sum::<f64>()
                    / (m - 1.0).max(1.0);
                let tail = draws.iter().filter(|d| **d > w).count() as f64 / m;
                (Some((var / m).sqrt()), tail)
            }
        }
    }
}

/// stream ids for the frozen offer draws; disjoint from the per-agent
/// panel streams, which stay below 2^32.
fn draw_stream(a: u32, e: u32, kind: u64) -> u64 {
    (u64::from(a) << 32) | (u64::from(e) << 8) | kind
}

fn make_excess(cfg: &DdcConfig, a: u32, e: u32, treated: bool) -> Excess {
    let mu = cfg.offer_mean(a, treated);
    match cfg.expectation {
        ExpectationMode::Analytic => Excess::Analytic { mu, sigma: cfg.sigma_xi },
        ExpectationMode::MonteCarlo { draws } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(draw_stream(a, e, u64::from(treated)));
            let sample = (0..draws)
                .map(|_| {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    mu + cfg.sigma_xi * xi
                })
                .collect();
            Excess::Empirical { draws: sample }
        }
    }
}

/// root of F(w) = w - base - k * E(w) by bracketed bisection. returns the
/// root and the number of steps taken.
fn solve_fixed_point(base: f64, k: f64, excess: &Excess, a: u32, e: u32) -> Result<(f64, u32)> {
    let residual = |w: f64| w - base - k * excess.value(w);
    if !base.is_finite() || !k.is_finite() || k < 0.0 {
        return Err(SurvError::Estimation(format!(
            "reservation equation for a={a}, e={e} has non-finite coefficients"
        )));
    }
    // F(base) = -k * E(base); when that is exactly zero the flow value is
    // already the fixed point
    let lift = k * excess.value(base);
    if lift == 0.0 {
        return Ok((base, 0));
    }

    let mut iterations = 0u32;
    let mut lo = base;
    let mut hi = base + lift.max(1.0);
    let mut span = hi - lo;
    while residual(hi) < 0.0 {
        iterations += 1;
        if iterations > MAX_ITERS {
            return Err(SurvError::ReservationDiverged {
                a,
                e,
                iterations: iterations as usize,
                last_step: hi - lo,
            });
        }
        // F is increasing, so a negative residual keeps the root above hi
        lo = hi;
        span *= 2.0;
        hi += span;
    }
    while hi - lo > STEP_TOL {
        iterations += 1;
        if iterations > MAX_ITERS {
            return Err(SurvError::ReservationDiverged {
                a,
                e,
                iterations: iterations as usize,
                last_step: hi - lo,
            });
        }
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), iterations))
}

/// delta-method standard error of the root. a perturbation dE of the
/// excess moves the root by k * dE / F'(w), with F'(w) = 1 + k * tail;
/// `extra_var` carries variance inherited through the base term.
fn propagate_se(k: f64, excess: &Excess, w: f64, extra_var: f64) -> Option<f64> {
    let (se_e, tail) = excess.se_and_tail(w);
    let se_e = se_e?;
    let slope = 1.0 + k * tail;
    Some(((k * se_e).powi(2) + extra_var).sqrt() / slope)
}

/// post-treatment reservation for one (ability, effort) cell. the
/// equation is w = (w0 - c) + (rho * lambda / (1 - rho)) * E_tr(w) with
/// E_tr taken over the treated offer distribution; treatment
/// probabilities never enter.
pub fn solve_reservation_post(cfg: &DdcConfig, a: u32, e: u32) -> Result<Solved> {
    cfg.validate()?;
    let base = cfg.w0(a) - cfg.cost(a, e);
    let k = cfg.rho * cfg.arrival_prob(a, e) / (1.0 - cfg.rho);
    let excess = make_excess(cfg, a, e, true);
    let (value, iterations) = solve_fixed_point(base, k, &excess, a, e)?;
    let mc_se = propagate_se(k, &excess, value, 0.0);
    Ok(Solved { value, iterations, mc_se })
}

/// pre-treatment reservation for one cell and regime. solves the
/// post-treatment value first, then
/// w = [(1-rho)(w0-c) + rho*lambda*E(w) + rho*pi*w_post] / (1-rho+rho*pi)
/// with E over the untreated offer distribution.
pub fn solve_reservation_pre(cfg: &DdcConfig, a: u32, e: u32, z: u8) -> Result<Solved> {
    cfg.validate()?;
    if z > 1 {
        return Err(SurvError::Config(format!("regime must be 0 or 1, got {z}")));
    }
    let post = solve_reservation_post(cfg, a, e)?;
    solve_pre_given(cfg, a, e, cfg.pi[usize::from(z)], &post)
}

fn solve_pre_given(cfg: &DdcConfig, a: u32, e: u32, pi: f64, post: &Solved) -> Result<Solved> {
    let denom = 1.0 - cfg.rho + cfg.rho * pi;
    let base = ((1.0 - cfg.rho) * (cfg.w0(a) - cfg.cost(a, e)) + cfg.rho * pi * post.value) / denom;
    let k = cfg.rho * cfg.arrival_prob(a, e) / denom;
    let excess = make_excess(cfg, a, e, false);
    let (value, iterations) = solve_fixed_point(base, k, &excess, a, e)?;
    let inherited = post.mc_se.map_or(0.0, |se| (cfg.rho * pi / denom * se).powi(2));
    let mc_se = propagate_se(k, &excess, value, inherited);
    Ok(Solved { value, iterations, mc_se })
}

/// solves every cell of the configured (ability, effort) grid: the
/// post-treatment value, the pre-treatment value under both regimes, and
/// the drift direction diagnostic.
pub fn solve_reservation_table(cfg: &DdcConfig) -> Result<ReservationTable> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for a in cfg.a_min..=cfg.a_max {
        for e in cfg.e_min..=cfg.e_max {
            let w_post = solve_reservation_post(cfg, a, e)?;
            let w_pre = [
                solve_pre_given(cfg, a, e, cfg.pi[0], &w_post)?,
                solve_pre_given(cfg, a, e, cfg.pi[1], &w_post)?,
            ];
            let at_zero = solve_pre_given(cfg, a, e, 0.0, &w_post)?;
            let gap = w_post.value - at_zero.value;
            let value_direction = if gap.abs() <= 1e-8 {
                0
            } else if gap > 0.0 {
                1
            } else {
                -1
            };
            cells.push(ReservationCell { a, e, w_post, w_pre, value_direction });
        }
    }
    Ok(ReservationTable {
        a_min: cfg.a_min,
        a_max: cfg.a_max,
        e_min: cfg.e_min,
        e_max: cfg.e_max,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> DdcConfig {
        DdcConfig::default()
    }

    #[test]
    fn analytic_excess_matches_numeric_integral() {
        let excess = Excess::Analytic { mu: 2.0, sigma: 1.5 };
        for &w in &[-3.0f64, 0.0, 2.0, 4.5] {
            // Riemann sum of integral_w^inf (x - w) phi(x; mu, sigma) dx
            let std = Normal::new(0.0, 1.0).unwrap();
            let (mut total, n) = (0.0, 400_000);
            let (lo, hi) = (w.max(2.0 - 12.0 * 1.5), 2.0 + 12.0 * 1.5);
            let h = (hi - lo) / n as f64;
            for i in 0..n {
                let x = lo + (i as f64 + 0.5) * h;
                total += (x - w) * std.pdf((x - 2.0) / 1.5) / 1.5 * h;
            }
            assert!(
                (excess.value(w) - total).abs() < 1e-6,
                "w={w}: {} vs {}",
                excess.value(w),
                total
            );
        }
    }

    #[test]
    fn excess_is_clamped_non_negative() {
        let excess = Excess::Analytic { mu: 0.0, sigma: 1.0 };
        let far = excess.value(40.0);
        assert!(far >= 0.0 && far < 1e-12);
    }

    #[test]
    fn empirical_excess_agrees_with_analytic() {
        let mut cfg = base_config();
        cfg.expectation = ExpectationMode::MonteCarlo { draws: 50_000 };
        let emp = make_excess(&cfg, 3, 2, false);
        let ana = Excess::Analytic { mu: cfg.offer_mean(3, false), sigma: cfg.sigma_xi };
        for &w in &[8.0, 12.0, 16.0] {
            let (se, _) = emp.se_and_tail(w);
            let se = se.unwrap();
            assert!(
                (emp.value(w) - ana.value(w)).abs() < 3.0 * se,
                "w={w}: {} vs {} (se {se})",
                emp.value(w),
                ana.value(w)
            );
        }
    }

    #[test]
    fn zero_arrival_rate_returns_flow_value_exactly() {
        let mut cfg = base_config();
        cfg.beta_lambda_a = 0.0;
        cfg.beta_lambda_e = 0.0;
        let flow = cfg.w0(3) - cfg.cost(3, 2);
        let post = solve_reservation_post(&cfg, 3, 2).unwrap();
        assert_eq!(post.value, flow);
        assert_eq!(post.iterations, 0);
        // the pre-treatment base folds the post value back in, so it only
        // reproduces the flow value up to rounding
        let pre = solve_reservation_pre(&cfg, 3, 2, 1).unwrap();
        assert!((pre.value - flow).abs() < 1e-12);
    }

    #[test]
    fn vanishing_discount_approaches_flow_value() {
        let mut cfg = base_config();
        cfg.rho = 1e-12;
        let flow = cfg.w0(2) - cfg.cost(2, 1);
        let post = solve_reservation_post(&cfg, 2, 1).unwrap();
        assert!((post.value - flow).abs() < 1e-9, "{} vs {flow}", post.value);
    }

    #[test]
    fn solution_satisfies_the_fixed_point_equation() {
        let cfg = base_config();
        for (a, e) in [(1, 1), (3, 2), (6, 3)] {
            let post = solve_reservation_post(&cfg, a, e).unwrap();
            let base = cfg.w0(a) - cfg.cost(a, e);
            let k = cfg.rho * cfg.arrival_prob(a, e) / (1.0 - cfg.rho);
            let excess = Excess::Analytic { mu: cfg.offer_mean(a, true), sigma: cfg.sigma_xi };
            let residual = post.value - base - k * excess.value(post.value);
            assert!(residual.abs() < 1e-8, "a={a}, e={e}: residual {residual}");
            assert!(post.mc_se.is_none());
        }
    }

    #[test]
    fn zero_shift_collapses_pre_onto_post() {
        let mut cfg = base_config();
        cfg.beta_w_s = 0.0;
        for (a, e) in [(1, 1), (4, 2), (6, 3)] {
            let post = solve_reservation_post(&cfg, a, e).unwrap();
            for z in [0u8, 1u8] {
                let pre = solve_reservation_pre(&cfg, a, e, z).unwrap();
                assert!(
                    (pre.value - post.value).abs() < 1e-8,
                    "a={a}, e={e}, z={z}: {} vs {}",
                    pre.value,
                    post.value
                );
            }
        }
    }

    #[test]
    fn post_value_ignores_treatment_probabilities() {
        let mut low = base_config();
        low.pi = [0.0, 0.001];
        let mut high = base_config();
        high.pi = [0.25, 0.9];
        for (a, e) in [(1, 3), (3, 2), (6, 1)] {
            let w_low = solve_reservation_post(&low, a, e).unwrap();
            let w_high = solve_reservation_post(&high, a, e).unwrap();
            assert_eq!(w_low.value, w_high.value);
            assert_eq!(w_low.iterations, w_high.iterations);
        }
    }

    #[test]
    fn pre_value_drifts_monotonically_toward_post() {
        let mut cfg = base_config();
        let post = solve_reservation_post(&cfg, 3, 2).unwrap();
        let mut previous = None;
        for pi in [0.0, 0.01, 0.03, 0.1, 0.5] {
            cfg.pi = [pi, pi];
            let pre = solve_reservation_pre(&cfg, 3, 2, 0).unwrap();
            assert!(pre.value <= post.value + 1e-9);
            if let Some(last) = previous {
                assert!(pre.value > last, "pi={pi}: {} not above {last}", pre.value);
            }
            previous = Some(pre.value);
        }

        // a negative shift reverses the drift
        let mut neg = base_config();
        neg.treatment_shift_sign = -1.0;
        let post_neg = solve_reservation_post(&neg, 3, 2).unwrap();
        let mut previous = None;
        for pi in [0.0, 0.05, 0.3] {
            neg.pi = [pi, pi];
            let pre = solve_reservation_pre(&neg, 3, 2, 0).unwrap();
            assert!(pre.value >= post_neg.value - 1e-9);
            if let Some(last) = previous {
                assert!(pre.value < last, "pi={pi}: {} not below {last}", pre.value);
            }
            previous = Some(pre.value);
        }
    }

    #[test]
    fn monte_carlo_solution_is_within_its_error_band() {
        let analytic = solve_reservation_post(&base_config(), 3, 2).unwrap();
        let mut cfg = base_config();
        cfg.expectation = ExpectationMode::MonteCarlo { draws: 1000 };
        let mc = solve_reservation_post(&cfg, 3, 2).unwrap();
        let se = mc.mc_se.expect("monte-carlo mode reports a standard error");
        assert!(se > 0.0);
        assert!(
            (mc.value - analytic.value).abs() <= 3.0 * se,
            "{} vs {} (se {se})",
            mc.value,
            analytic.value
        );
    }

    #[test]
    fn table_covers_the_grid_and_reports_directions() {
        let mut cfg = base_config();
        cfg.a_min = 1;
        cfg.a_max = 2;
        cfg.e_min = 1;
        cfg.e_max = 3;
        let table = solve_reservation_table(&cfg).unwrap();
        assert_eq!(table.cells().len(), 6);
        for a in 1..=2 {
            for e in 1..=3 {
                let cell = table.cell(a, e).unwrap();
                assert_eq!((cell.a, cell.e), (a, e));
                // a positive shift puts the post-treatment reservation above
                assert_eq!(cell.value_direction, 1);
                assert!(cell.w_pre[0].value <= cell.w_pre[1].value);
            }
        }
        assert!(table.cell(3, 1).is_none());
        assert!(table.cell(1, 4).is_none());

        let text = serde_json::to_string(&table).unwrap();
        let back: ReservationTable = serde_json::from_str(&text).unwrap();
        assert_eq!(back.cells().len(), 6);
        assert_eq!(back.cell(2, 3).unwrap().w_post.value, table.cell(2, 3).unwrap().w_post.value);
    }

    #[test]
    fn rejects_bad_regime_index() {
        let err = solve_reservation_pre(&base_config(), 1, 1, 2).unwrap_err();
        assert!(matches!(err, SurvError::Config(_)));
    }
}
