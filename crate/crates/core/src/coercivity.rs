//! Constants, the map Θ, and the mapped-coercivity / sign-condition checks.
//!
//! Θ is the Schur direction `Θp = κ M_V⁻¹ Bᵀ p` with `κ = 1/γ²`, where
//! `γ²` is the smallest eigenvalue of `(B M_V⁻¹ Bᵀ + T, M_Q)` on zero-mean
//! pressures. With this scaling `⟨BΘp, p⟩ ≥ ½‖p‖² − c_T⟨Tp, p⟩` holds with
//! `c_T ≤ κ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::assembly::{convection_residual, OperatorBlocks};
use crate::error::{Error, Result};
use crate::fe_space::Spaces;
use crate::linalg::{
    column, gen_sym_eigen, smallest_generalized_eigenvalue, to_dense, SparseCholesky,
};
use crate::solver::{schur_complement_dense, Problem, RieszMap, SaddleState};
use crate::sparse::{dot, CsrMatrix};
use crate::stabilization::Stabilizer;

pub const SCHEMA_VERSION: u32 = 1;

/// Smallest generalized eigenvalue of `(L, M_V)` on interior DOFs.
pub fn estimate_alpha(blocks: &OperatorBlocks) -> Result<f64> {
    smallest_generalized_eigenvalue(&blocks.l_ii, &blocks.m_v_ii, 500)
}

/// Zero-mean generalized eigenpairs of `(B M_V⁻¹ Bᵀ + T, M_Q)`, ascending.
/// Vectors are `M_Q`-orthonormal.
pub struct InfSupSpectrum {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn infsup_spectrum(
    blocks: &OperatorBlocks,
    t: &CsrMatrix,
    mean: &[f64],
) -> Result<InfSupSpectrum> {
    let s = schur_complement_dense(blocks)?;
    zero_mean_spectrum(s, Some(t), &blocks.m_q, mean)
}

fn zero_mean_spectrum(
    mut a: faer::Mat<f64>,
    t: Option<&CsrMatrix>,
    m_q: &CsrMatrix,
    mean: &[f64],
) -> Result<InfSupSpectrum> {
    let np = mean.len();
    if let Some(t) = t {
        for (i, j, v) in t.iter() {
            a[(i, j)] += v;
        }
    }
    let m = to_dense(m_q);
    // lift the constant mode away from the rest, then drop it by its mean
    let sigma = 100.0
        * (0..np)
            .map(|i| a[(i, i)] / m[(i, i)])
            .fold(0.0f64, f64::max)
        + 1.0;
    let area: f64 = mean.iter().sum();
    for i in 0..np {
        for j in 0..np {
            a[(i, j)] += sigma * mean[i] * mean[j] / area;
        }
    }
    let (vals, vecs) = gen_sym_eigen(&a, &m)?;
    let constant = (0..np)
        .max_by(|&x, &y| {
            let fx = dot(mean, &column(&vecs, x)).abs();
            let fy = dot(mean, &column(&vecs, y)).abs();
            fx.total_cmp(&fy)
        })
        .ok_or_else(|| Error::InvalidArgument("empty pressure space".into()))?;
    let mut values = Vec::with_capacity(np.saturating_sub(1));
    let mut vectors = Vec::with_capacity(np.saturating_sub(1));
    for k in 0..np {
        if k != constant {
            values.push(vals[k]);
            vectors.push(column(&vecs, k));
        }
    }
    Ok(InfSupSpectrum { values, vectors })
}

/// `Θp = κ M_V⁻¹ Bᵀ p` as a full velocity vector with zero boundary values.
pub struct ThetaMap {
    kappa: f64,
    chol: SparseCholesky,
    b_i: CsrMatrix,
    interior: Vec<usize>,
    nv: usize,
    mean: Vec<f64>,
    m_q: CsrMatrix,
}

impl ThetaMap {
    pub fn new(spaces: &Spaces, blocks: &OperatorBlocks, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Θ scaling must be positive and finite, got {kappa}"
            )));
        }
        Ok(Self {
            kappa,
            chol: SparseCholesky::new(&blocks.m_v_ii)?,
            b_i: blocks.b_i.clone(),
            interior: spaces.velocity.interior_dofs.clone(),
            nv: spaces.velocity.dim(),
            mean: spaces.pressure.mean.clone(),
            m_q: blocks.m_q.clone(),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn raw(&self, p: &[f64]) -> Vec<f64> {
        self.chol.solve(&self.b_i.tr_mul_vec(p))
    }

    fn check_mean(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.mean.len() {
            return Err(Error::Dimension(
                "pressure vector does not match the space".into(),
            ));
        }
        let area: f64 = self.mean.iter().sum();
        let norm = self.m_q.bilinear(p, p).max(0.0).sqrt();
        let avg = dot(&self.mean, p);
        if avg.abs() > 1e-8 * norm * area.sqrt() {
            return Err(Error::InvalidArgument(format!(
                "pressure has nonzero mean {avg:e}"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_mean(p)?;
        let vi = self.raw(p);
        let mut v = vec![0.0; self.nv];
        for (&d, x) in self.interior.iter().zip(vi) {
            v[d] = self.kappa * x;
        }
        Ok(v)
    }

    /// Unscaled Schur value `s(p) = pᵀ B M_V⁻¹ Bᵀ p`.
    pub fn schur_value(&self, p: &[f64]) -> f64 {
        let w = self.raw(p);
        dot(&self.b_i.tr_mul_vec(p), &w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfSupEstimate {
    pub gamma_stab: f64,
    /// Smallest eigenvalue of `(B M_V⁻¹ Bᵀ + T, M_Q)` on zero-mean pressures.
    pub gamma_stab_sq: f64,
    /// Largest eigenvalue of `(B M_V⁻¹ Bᵀ, M_Q)`.
    pub schur_max: f64,
    pub kappa: f64,
    pub c_theta: f64,
    pub c_t: f64,
}

/// Stabilized inf-sup constant and the constant `c_T` bounding `½ − κ s(p)` by `t(p,p)`, sampled on the
/// eigenbasis plus `samples` random zero-mean pressures.
pub fn estimate_infsup(
    spaces: &Spaces,
    blocks: &OperatorBlocks,
    t: &CsrMatrix,
    samples: usize,
    seed: u64,
) -> Result<InfSupEstimate> {
    let mean = &spaces.pressure.mean;
    let s = schur_complement_dense(blocks)?;
    let stab = zero_mean_spectrum(s.clone(), Some(t), &blocks.m_q, mean)?;
    let schur = if t.nnz() == 0 {
        InfSupSpectrum {
            values: stab.values.clone(),
            vectors: Vec::new(),
        }
    } else {
        zero_mean_spectrum(s.clone(), None, &blocks.m_q, mean)?
    };
    let gamma_sq = stab.values.first().copied().unwrap_or(0.0);
    let schur_max = schur.values.iter().copied().fold(0.0f64, f64::max);
    let kappa = if gamma_sq > 0.0 {
        1.0 / gamma_sq
    } else {
        f64::INFINITY
    };
    let np = mean.len();
    let s_of = |p: &[f64]| -> f64 {
        (0..np)
            .map(|i| p[i] * (0..np).map(|j| s[(i, j)] * p[j]).sum::<f64>())
            .sum()
    };

    let mut candidates = stab.vectors.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        candidates.push(random_pressure(spaces, &blocks.m_q, &mut rng));
    }
    let mut c_t: f64 = 0.0;
    for p in &candidates {
        let nq = blocks.m_q.bilinear(p, p);
        if nq <= 0.0 {
            continue;
        }
        let num = 0.5 - kappa * s_of(p) / nq;
        let tp = t.bilinear(p, p) / nq;
        if tp > 1e-14 {
            c_t = c_t.max(num.max(0.0) / tp);
        } else if num > 1e-12 {
            c_t = f64::INFINITY;
        }
    }
    Ok(InfSupEstimate {
        gamma_stab: gamma_sq.max(0.0).sqrt(),
        gamma_stab_sq: gamma_sq,
        schur_max,
        kappa,
        c_theta: kappa * schur_max.sqrt(),
        c_t,
    })
}

/// Standard normal interior coefficients scaled to `‖u‖_V = 1`.
pub fn random_velocity(spaces: &Spaces, blocks: &OperatorBlocks, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let vals: Vec<f64> = (0..spaces.velocity.num_interior())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let mut u = spaces.velocity.extend(&vals);
    let n = blocks.m_v.bilinear(&u, &u).sqrt();
    u.iter_mut().for_each(|v| *v /= n);
    u
}

/// Standard normal coefficients, mean removed, scaled to `‖p‖_{L²} = 1`.
pub fn random_pressure(spaces: &Spaces, m_q: &CsrMatrix, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut p: Vec<f64> = (0..spaces.pressure.dim())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    spaces.pressure.remove_mean(&mut p);
    let n = m_q.bilinear(&p, &p).sqrt();
    p.iter_mut().for_each(|v| *v /= n);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnEstimate {
    pub c_n: f64,
    pub amplitudes: Vec<f64>,
    /// Largest ratio `‖C(u)+S(u)‖_{V'}/‖u‖_V²` per amplitude.
    pub max_ratio: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

pub const CN_AMPLITUDES: [f64; 3] = [0.1, 1.0, 10.0];

/// Quadratic growth constant of `C + S`, sampled on random directions at
/// amplitudes 0.1, 1 and 10 (the same directions for every amplitude).
pub fn estimate_cn(
    spaces: &Spaces,
    blocks: &OperatorBlocks,
    stabilizer: &Stabilizer,
    samples: usize,
    seed: u64,
) -> Result<CnEstimate> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ));
    }
    let riesz = RieszMap::new(spaces, blocks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Vec<f64>> = (0..samples)
        .map(|_| random_velocity(spaces, blocks, &mut rng))
        .collect();
    let mut max_ratio = Vec::with_capacity(CN_AMPLITUDES.len());
    for &a in &CN_AMPLITUDES {
        let mut best: f64 = 0.0;
        for d in &dirs {
            let u: Vec<f64> = d.iter().map(|v| a * v).collect();
            let mut r = convection_residual(spaces, &u)?;
            let s = stabilizer.velocity_residual(spaces, &u)?;
            r.iter_mut().zip(&s).for_each(|(x, y)| *x += y);
            best = best.max(riesz.dual_norm(&r) / (a * a));
        }
        max_ratio.push(best);
    }
    Ok(CnEstimate {
        c_n: max_ratio.iter().copied().fold(0.0, f64::max),
        amplitudes: CN_AMPLITUDES.to_vec(),
        max_ratio,
        samples,
        seed,
    })
}

/// Constants and derived step sizes / radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub alpha: f64,
    pub c_l: f64,
    pub c_theta: f64,
    pub c_n: f64,
    pub c_t: f64,
    /// `‖f‖_{V'}`.
    pub f_dual: f64,
    pub tau_max1: f64,
    pub tau_max2: f64,
    pub tau_max3: f64,
    pub r1: f64,
    pub r2: f64,
    pub r: f64,
}

impl ConstantSet {
    pub fn new(
        alpha: f64,
        c_l: f64,
        c_theta: f64,
        c_n: f64,
        c_t: f64,
        f_dual: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("alpha", alpha),
            ("c_L", c_l),
            ("c_Theta", c_theta),
            ("c_N", c_n),
            ("c_T", c_t),
            ("f_dual", f_dual),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument("alpha must be positive".into()));
        }
        // c_Θ = ∞ (no inf-sup stability) is allowed; every τ bound is then 0
        if !(c_theta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "c_Theta must be positive, got {c_theta}"
            )));
        }
        if c_n == 0.0 && c_l == 0.0 {
            return Err(Error::InvalidArgument("c_N and c_L are both zero".into()));
        }
        let tau_max1 = 1.0 / c_t;
        let tau_max2 = tau_max1.min(1.0 / (alpha * c_theta * c_theta));
        let r1 = 4.0 * f_dual / alpha;
        let tau_max3 = (alpha / (c_theta * c_theta * (c_n * r1 + c_l).powi(2))).min(tau_max2);
        let r2 = if r1 == 0.0 {
            0.0
        } else {
            r1 * alpha.sqrt() / tau_max3.sqrt()
        };
        Ok(Self {
            alpha,
            c_l,
            c_theta,
            c_n,
            c_t,
            f_dual,
            tau_max1,
            tau_max2,
            tau_max3,
            r1,
            r2,
            r: r1.max(r2),
        })
    }
}

/// `τ(‖u‖) = min(½αc_Θ⁻²(c_N‖u‖ + c_L)⁻², τ_max2, (2c_Θ)⁻¹)`.
pub fn compute_tau(u_norm: f64, c: &ConstantSet) -> Result<f64> {
    if !(c.c_theta > 0.0 && c.c_theta.is_finite()) || (c.c_n == 0.0 && c.c_l == 0.0) {
        return Err(Error::InvalidArgument("invalid constants for τ".into()));
    }
    if !(u_norm >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "norm must be nonnegative, got {u_norm}"
        )));
    }
    let growth = 0.5 * c.alpha / (c.c_theta * c.c_theta * (c.c_n * u_norm + c.c_l).powi(2));
    Ok(growth.min(c.tau_max2).min(0.5 / c.c_theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignSample {
    pub radius_factor: f64,
    pub norm: f64,
    pub u_norm: f64,
    pub p_norm: f64,
    pub tau: f64,
    pub margin: f64,
    /// `⟨Ψ(x), R(x)⟩` evaluated through the residual map.
    pub probe: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub schema: u32,
    pub check: String,
    pub constants: ConstantSet,
    pub infsup: InfSupEstimate,
    /// Fixed step of the linear check.
    pub tau: Option<f64>,
    pub beta_min: Option<f64>,
    pub beta_min_velocity: Option<f64>,
    pub beta_min_pressure: Option<f64>,
    pub sign_condition: Vec<SignSample>,
    pub min_margin: Option<f64>,
    pub sample_count: usize,
    pub seed: u64,
    pub pass: bool,
    /// Why the check could not be carried out, if it failed that way.
    pub note: Option<String>,
}

impl CoercivityReport {
    fn degenerate(
        check: &str,
        consts: &ConstantSet,
        infsup: &InfSupEstimate,
        samples: usize,
        seed: u64,
    ) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            check: check.into(),
            constants: *consts,
            infsup: *infsup,
            tau: None,
            beta_min: None,
            beta_min_velocity: None,
            beta_min_pressure: None,
            sign_condition: Vec::new(),
            min_margin: None,
            sample_count: samples,
            seed,
            pass: false,
            note: Some(format!(
                "stabilized inf-sup constant vanishes (gamma^2 = {:e}); the map Theta is undefined",
                infsup.gamma_stab_sq
            )),
        }
    }
}

/// `⟨A_h x, Φx⟩` with `Φx = (u − τΘp, p)` for the linear operator.
pub fn mapped_pairing(
    blocks: &OperatorBlocks,
    t: &CsrMatrix,
    theta: &ThetaMap,
    tau: f64,
    u: &[f64],
    p: &[f64],
) -> Result<f64> {
    let tp = theta.apply(p)?;
    let w: Vec<f64> = u.iter().zip(&tp).map(|(a, b)| a - tau * b).collect();
    let lu = blocks.l.mul_vec(u);
    let btp = blocks.b.tr_mul_vec(p);
    let ru: Vec<f64> = lu.iter().zip(&btp).map(|(a, b)| a - b).collect();
    let bu = blocks.b.mul_vec(u);
    let tpp = t.mul_vec(p);
    let rp: Vec<f64> = bu.iter().zip(&tpp).map(|(a, b)| a + b).collect();
    Ok(dot(&ru, &w) + dot(&rp, p))
}

/// Samples `⟨A_h x, Φx⟩/‖x‖²` for the linear stabilized operator with the
/// fixed `τ = min(c_T⁻¹, α(c_Θ c_L)⁻²)`, plus the slices `p = 0` and `u = 0`.
pub fn check_mapped_coercivity(
    spaces: &Spaces,
    blocks: &OperatorBlocks,
    t: &CsrMatrix,
    consts: &ConstantSet,
    infsup: &InfSupEstimate,
    samples: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    if !infsup.kappa.is_finite() {
        return Ok(CoercivityReport::degenerate(
            "mapped", consts, infsup, samples, seed,
        ));
    }
    let theta = ThetaMap::new(spaces, blocks, infsup.kappa)?;
    let tau = (1.0 / consts.c_t).min(consts.alpha / (consts.c_theta * consts.c_l).powi(2));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = Uniform::new_inclusive(0.0, std::f64::consts::FRAC_PI_2).expect("valid range");
    let zero_p = vec![0.0; spaces.pressure.dim()];
    let zero_u = vec![0.0; spaces.velocity.dim()];
    let (mut full, mut vel, mut pre) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for _ in 0..samples {
        let uh = random_velocity(spaces, blocks, &mut rng);
        let ph = random_pressure(spaces, &blocks.m_q, &mut rng);
        let th: f64 = angle.sample(&mut rng);
        let u: Vec<f64> = uh.iter().map(|v| th.cos() * v).collect();
        let p: Vec<f64> = ph.iter().map(|v| th.sin() * v).collect();
        // ‖x‖ = 1 by construction
        full = full.min(mapped_pairing(blocks, t, &theta, tau, &u, &p)?);
        vel = vel.min(mapped_pairing(blocks, t, &theta, tau, &uh, &zero_p)?);
        pre = pre.min(mapped_pairing(blocks, t, &theta, tau, &zero_u, &ph)?);
    }
    let beta_min = full.min(vel).min(pre);
    Ok(CoercivityReport {
        schema: SCHEMA_VERSION,
        check: "mapped".into(),
        constants: *consts,
        infsup: *infsup,
        tau: Some(tau),
        beta_min: Some(beta_min),
        beta_min_velocity: Some(vel),
        beta_min_pressure: Some(pre),
        sign_condition: Vec::new(),
        min_margin: None,
        sample_count: samples,
        seed,
        pass: beta_min > 0.0,
        note: None,
    })
}

/// Riesz representative of the residual: `(M_V⁻¹ r_u, M_Q⁻¹ r_p)` with
/// the pressure part taken in the zero-mean space.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMap {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub norm: f64,
}

pub fn residual_map(problem: &Problem, riesz: &RieszMap, x: &SaddleState) -> Result<ResidualMap> {
    let (ru, rp) = problem.operator_residual(&x.u, &x.p)?;
    let u = riesz.velocity(&ru);
    let p = riesz.pressure(&rp);
    let norm = (problem.blocks.m_v.bilinear(&u, &u) + problem.blocks.m_q.bilinear(&p, &p))
        .max(0.0)
        .sqrt();
    Ok(ResidualMap { u, p, norm })
}

pub const DEFAULT_RADIUS_GRID: [f64; 4] = [1.0, 2.0, 5.0, 10.0];

/// Samples `⟨A(x) − b, SΨ(x)⟩` with `SΨ(x) = (u − τ(u)Θp, p)` on spheres
/// `‖x‖ = ρ·r` for each `ρ` in `radius_grid` (`r` is replaced by 1 when it
/// vanishes). Requires homogeneous boundary data.
pub fn check_sign_condition(
    problem: &Problem,
    consts: &ConstantSet,
    infsup: &InfSupEstimate,
    radius_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    if problem.lift.iter().any(|&v| v != 0.0) {
        return Err(Error::Config(
            "the sign condition is checked with homogeneous boundary data only".into(),
        ));
    }
    if !infsup.kappa.is_finite() {
        return Ok(CoercivityReport::degenerate(
            "sign", consts, infsup, samples, seed,
        ));
    }
    let spaces = &problem.spaces;
    let blocks = &problem.blocks;
    let theta = ThetaMap::new(spaces, blocks, infsup.kappa)?;
    let riesz = RieszMap::new(spaces, blocks)?;
    let base = if consts.r > 0.0 { consts.r } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = Uniform::new_inclusive(0.0, std::f64::consts::FRAC_PI_2).expect("valid range");
    let mut out = Vec::with_capacity(radius_grid.len() * samples);
    for &factor in radius_grid {
        let rho = factor * base;
        for _ in 0..samples {
            let uh = random_velocity(spaces, blocks, &mut rng);
            let ph = random_pressure(spaces, &blocks.m_q, &mut rng);
            let th: f64 = angle.sample(&mut rng);
            let (un, pn) = (rho * th.cos(), rho * th.sin());
            let u: Vec<f64> = uh.iter().map(|v| un * v).collect();
            let p: Vec<f64> = ph.iter().map(|v| pn * v).collect();
            let tau = compute_tau(un, consts)?;
            let tp = theta.apply(&p)?;
            let w: Vec<f64> = u.iter().zip(&tp).map(|(a, b)| a - tau * b).collect();
            let (ru, rp) = problem.operator_residual(&u, &p)?;
            let margin = dot(&ru, &w) + dot(&rp, &p);
            let rm = residual_map(
                problem,
                &riesz,
                &SaddleState {
                    u: u.clone(),
                    p: p.clone(),
                    lambda: 0.0,
                },
            )?;
            let probe = blocks.m_v.bilinear(&w, &rm.u) + blocks.m_q.bilinear(&p, &rm.p);
            out.push(SignSample {
                radius_factor: factor,
                norm: rho,
                u_norm: un,
                p_norm: pn,
                tau,
                margin,
                probe,
                threshold: -1e-8 * (1.0 + rho * rho) * consts.f_dual.max(1.0),
            });
        }
    }
    let pass = out.iter().all(|s| s.margin >= s.threshold);
    let min_margin = out.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min);
    Ok(CoercivityReport {
        schema: SCHEMA_VERSION,
        check: "sign".into(),
        constants: *consts,
        infsup: *infsup,
        tau: None,
        beta_min: None,
        beta_min_velocity: None,
        beta_min_pressure: None,
        sign_condition: out,
        min_margin: Some(min_margin),
        sample_count: samples,
        seed,
        pass,
        note: None,
    })
}

/// Everything the checks need for one problem: `α = c_L = μ` (estimated),
/// inf-sup data, `c_N` and `‖f‖_{V'}`.
pub struct LabSetup {
    pub alpha: f64,
    pub infsup: InfSupEstimate,
    pub cn: CnEstimate,
    pub constants: ConstantSet,
}

pub fn lab_setup(problem: &Problem, samples: usize, seed: u64) -> Result<LabSetup> {
    let alpha = estimate_alpha(&problem.blocks)?;
    let infsup = estimate_infsup(&problem.spaces, &problem.blocks, &problem.t, samples, seed)?;
    let cn = estimate_cn(
        &problem.spaces,
        &problem.blocks,
        &problem.stabilizer,
        samples,
        seed,
    )?;
    let riesz = RieszMap::new(&problem.spaces, &problem.blocks)?;
    let f_dual = riesz.dual_norm(&problem.f);
    let constants = ConstantSet::new(
        alpha,
        problem.spec.mu,
        infsup.c_theta,
        cn.c_n,
        infsup.c_t,
        f_dual,
    )?;
    Ok(LabSetup {
        alpha,
        infsup,
        cn,
        constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts() -> ConstantSet {
        ConstantSet::new(0.5, 0.5, 3.0, 2.0, 4.0, 0.7).unwrap()
    }

    #[test]
    fn radii_ordering() {
        let c = consts();
        assert!(c.tau_max3 <= c.tau_max2 && c.tau_max2 <= c.tau_max1);
        assert_eq!(c.r, c.r1.max(c.r2));
        assert!((c.r1 - 4.0 * 0.7 / 0.5).abs() < 1e-15);
    }

    #[test]
    fn tau_at_origin_and_asymptote() {
        let c = consts();
        let t0 = compute_tau(0.0, &c).unwrap();
        let want = (0.5 * c.alpha / (c.c_theta.powi(2) * c.c_l.powi(2)))
            .min(c.tau_max2)
            .min(0.5 / c.c_theta);
        assert_eq!(t0, want);
        let big = 1e8;
        let t = compute_tau(big, &c).unwrap();
        let lim = 0.5 * c.alpha / c.c_theta.powi(2);
        assert!((t * (c.c_n * big).powi(2) / lim - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unstable_pair_gives_zero_steps() {
        let c = ConstantSet::new(1.0, 1.0, f64::INFINITY, 1.0, 0.0, 0.0).unwrap();
        assert_eq!((c.tau_max2, c.tau_max3, c.r), (0.0, 0.0, 0.0));
        assert!(compute_tau(1.0, &c).is_err());
    }

    #[test]
    fn invalid_constants() {
        assert!(ConstantSet::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(ConstantSet::new(1.0, 1.0, f64::NAN, 1.0, 1.0, 0.0).is_err());
        assert!(ConstantSet::new(1.0, 0.0, 1.0, 0.0, 1.0, 0.0).is_err());
        let mut c = consts();
        c.c_theta = 0.0;
        assert!(compute_tau(1.0, &c).is_err());
    }
}
