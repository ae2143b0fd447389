use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stabfem::assembly::convection_residual;
use stabfem::coercivity::{
    compute_tau, estimate_infsup, lab_setup, random_pressure, random_velocity, residual_map,
    ConstantSet, ThetaMap,
};
use stabfem::harness::{CaseId, ManufacturedCase};
use stabfem::mesh::Mesh;
use stabfem::solver::{Problem, ProblemData, ProblemKind, ProblemSpec, RieszMap, SaddleState};
use stabfem::sparse::{dot, TripletBuilder};
use stabfem::stabilization::{PressureStab, StabilizationConfig, VelocityStab};

fn small(
    kind: ProblemKind,
    k: usize,
    p: PressureStab,
    v: VelocityStab,
    data: &ProblemData,
) -> Problem {
    let st = StabilizationConfig::pressure(p).with_velocity(v);
    let mesh = Mesh::unit_square(4, st.needs_patches()).unwrap();
    Problem::assemble(
        &mesh,
        k,
        ProblemSpec {
            kind,
            mu: 0.7,
            stab: st,
        },
        data,
    )
    .unwrap()
}

fn pressure_kind() -> impl Strategy<Value = PressureStab> {
    prop_oneof![
        Just(PressureStab::Bp),
        Just(PressureStab::Bh),
        Just(PressureStab::Lps)
    ]
}

fn velocity_kind() -> impl Strategy<Value = VelocityStab> {
    prop_oneof![
        Just(VelocityStab::None),
        Just(VelocityStab::Lps),
        Just(VelocityStab::Supg)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pressure_stabilization_is_nonnegative(kind in pressure_kind(), seed in any::<u64>()) {
        let p = small(ProblemKind::Stokes, 1, kind, VelocityStab::None, &ProblemData::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_pressure(&p.spaces, &p.blocks.m_q, &mut rng);
        prop_assert!(p.t.bilinear(&q, &q) >= -1e-12);
        prop_assert!(p.t.asymmetry() <= 1e-14 * p.t.max_abs().max(1.0));
    }

    #[test]
    fn convection_is_skew_and_stabilization_dissipative(
        k in 1usize..=2, v in velocity_kind(), amp in 0.01f64..100.0, seed in any::<u64>()
    ) {
        let p = small(ProblemKind::Nse, k, PressureStab::Bp, v, &ProblemData::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = random_velocity(&p.spaces, &p.blocks, &mut rng).iter().map(|x| amp * x).collect();
        let c = dot(&convection_residual(&p.spaces, &u).unwrap(), &u);
        prop_assert!(c.abs() <= 1e-10 * amp.powi(3));
        let s = dot(&p.stabilizer.velocity_residual(&p.spaces, &u).unwrap(), &u);
        prop_assert!(s >= -1e-12 * amp * amp);
    }

    /// `Φ(u + τΘp, p) = (u, p)`.
    #[test]
    fn mapping_has_explicit_preimage(kind in pressure_kind(), tau in 0.0f64..2.0, seed in any::<u64>()) {
        let p = small(ProblemKind::Stokes, 1, kind, VelocityStab::None, &ProblemData::default());
        let est = estimate_infsup(&p.spaces, &p.blocks, &p.t, 0, 0).unwrap();
        let theta = ThetaMap::new(&p.spaces, &p.blocks, est.kappa).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_velocity(&p.spaces, &p.blocks, &mut rng);
        let q = random_pressure(&p.spaces, &p.blocks.m_q, &mut rng);
        let tq = theta.apply(&q).unwrap();
        let w: Vec<f64> = u.iter().zip(&tq).map(|(a, b)| a + tau * b).collect();
        let back: Vec<f64> = w.iter().zip(&tq).map(|(a, b)| a - tau * b).collect();
        for (a, b) in back.iter().zip(&u) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        // Θ is bounded by c_Θ and pairs positively with B
        let tn = p.blocks.m_v.bilinear(&tq, &tq).sqrt();
        prop_assert!(tn <= est.c_theta * (1.0 + 1e-10));
        prop_assert!(dot(&p.blocks.b.mul_vec(&tq), &q) >= 0.0);
    }

    /// `⟨SΨ(x), x⟩ ≥ ¼‖x‖²` whenever `τ(u) ≤ 1/(2c_Θ)`, which `τ(u)` guarantees.
    #[test]
    fn psi_pairing_lower_bound(
        kind in pressure_kind(), un in 0.0f64..50.0, pn in 0.0f64..50.0, seed in any::<u64>()
    ) {
        let case = ManufacturedCase::new(CaseId::NseTrig);
        let p = small(ProblemKind::Nse, 1, kind, VelocityStab::None, &case.data(0.7));
        let lab = lab_setup(&p, 10, 1).unwrap();
        let theta = ThetaMap::new(&p.spaces, &p.blocks, lab.infsup.kappa).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = random_velocity(&p.spaces, &p.blocks, &mut rng).iter().map(|x| un * x).collect();
        let q: Vec<f64> = random_pressure(&p.spaces, &p.blocks.m_q, &mut rng).iter().map(|x| pn * x).collect();
        let tau = compute_tau(un, &lab.constants).unwrap();
        prop_assert!(tau <= 0.5 / lab.constants.c_theta);
        let tq = theta.apply(&q).unwrap();
        let w: Vec<f64> = u.iter().zip(&tq).map(|(a, b)| a - tau * b).collect();
        let pairing = p.blocks.m_v.bilinear(&w, &u) + p.blocks.m_q.bilinear(&q, &q);
        prop_assert!(pairing >= 0.25 * (un * un + pn * pn) - 1e-10 * (1.0 + un * un + pn * pn));
    }

    #[test]
    fn step_size_and_radii(
        alpha in 0.01f64..10.0, c_theta in 0.1f64..10.0, c_n in 0.0f64..10.0,
        c_t in 0.01f64..10.0, f in 0.0f64..10.0, u1 in 0.0f64..100.0, du in 0.0f64..100.0
    ) {
        let c = ConstantSet::new(alpha, alpha, c_theta, c_n, c_t, f).unwrap();
        prop_assert!(c.tau_max3 <= c.tau_max2 && c.tau_max2 <= c.tau_max1);
        prop_assert!((c.tau_max1 - 1.0 / c_t).abs() <= 1e-12 * c.tau_max1);
        prop_assert!((c.r1 - 4.0 * f / alpha).abs() <= 1e-12 * c.r1.max(1.0));
        prop_assert!(c.r >= c.r1 && c.r >= c.r2);
        let t1 = compute_tau(u1, &c).unwrap();
        let t2 = compute_tau(u1 + du, &c).unwrap();
        prop_assert!(t1 > 0.0 && t2 <= t1);
        prop_assert!(t1 <= c.tau_max2 && t1 <= 0.5 / c_theta);
    }

    #[test]
    fn riesz_map_recovers_norms(seed in any::<u64>()) {
        let p = small(ProblemKind::Stokes, 2, PressureStab::Bp, VelocityStab::None, &ProblemData::default());
        let riesz = RieszMap::new(&p.spaces, &p.blocks).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_velocity(&p.spaces, &p.blocks, &mut rng);
        let f = p.blocks.m_v.mul_vec(&u);
        prop_assert!((riesz.dual_norm(&f) - 1.0).abs() <= 1e-10);
        let back = riesz.velocity(&f);
        for (a, b) in back.iter().zip(&u) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    /// At the origin the residual map is `(−M_V⁻¹f, 0)` with norm `‖f‖_{V'}`,
    /// and it scales linearly with the data.
    #[test]
    fn residual_map_at_origin(scale in 0.1f64..10.0) {
        let case = ManufacturedCase::new(CaseId::NseTrig);
        let base = small(ProblemKind::Nse, 1, PressureStab::Bp, VelocityStab::None, &case.data(0.7));
        let data = ProblemData { force: Some(Box::new(move |x, y| {
            let f = case.force(0.7, x, y);
            [scale * f[0], scale * f[1]]
        })), ..ProblemData::default() };
        let scaled = small(ProblemKind::Nse, 1, PressureStab::Bp, VelocityStab::None, &data);
        let riesz = RieszMap::new(&base.spaces, &base.blocks).unwrap();
        let zero = SaddleState::zeros(&base.spaces);
        let r0 = residual_map(&base, &riesz, &zero).unwrap();
        let r1 = residual_map(&scaled, &riesz, &zero).unwrap();
        prop_assert!((r0.norm - riesz.dual_norm(&base.f)).abs() <= 1e-12 * r0.norm);
        prop_assert!((r1.norm - scale * r0.norm).abs() <= 1e-10 * r1.norm);
        prop_assert!(r0.p.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn uniform_refinement_preserves_area(n in 1usize..6, levels in 0usize..3) {
        let mut mesh = Mesh::unit_square(n, false).unwrap();
        prop_assert_eq!(mesh.num_cells(), 2 * n * n);
        for _ in 0..levels {
            let fine = mesh.refine_uniform();
            prop_assert_eq!(fine.num_cells(), 4 * mesh.num_cells());
            mesh = fine;
        }
        prop_assert!((mesh.total_area() - 1.0).abs() <= 1e-13);
        prop_assert!(mesh.validate().is_ok());
    }

    #[test]
    fn transpose_is_adjoint(
        entries in prop::collection::vec((0usize..7, 0usize..5, -10.0f64..10.0), 0..40),
        x in prop::collection::vec(-1.0f64..1.0, 5),
        y in prop::collection::vec(-1.0f64..1.0, 7),
    ) {
        let mut t = TripletBuilder::new(7, 5);
        for &(i, j, v) in &entries {
            t.push(i, j, v);
        }
        let a = t.build();
        let lhs = dot(&y, &a.mul_vec(&x));
        let rhs = dot(&x, &a.tr_mul_vec(&y));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        prop_assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn manufactured_velocity_is_solenoidal(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        for id in [CaseId::StokesTrig, CaseId::NseTrig] {
            prop_assert!(ManufacturedCase::new(id).divergence(x, y).abs() <= 1e-12);
        }
    }
}

#[test]
fn infsup_estimate_is_deterministic() {
    let p = small(
        ProblemKind::Stokes,
        1,
        PressureStab::Lps,
        VelocityStab::None,
        &ProblemData::default(),
    );
    let a = estimate_infsup(&p.spaces, &p.blocks, &p.t, 30, 11).unwrap();
    let b = estimate_infsup(&p.spaces, &p.blocks, &p.t, 30, 11).unwrap();
    assert_eq!(a, b);
}

#[test]
fn manufactured_data_are_compatible() {
    let mesh = Mesh::unit_square(16, false).unwrap();
    let spaces = stabfem::fe_space::build_spaces(&mesh, 2).unwrap();
    let g = ManufacturedCase::new(CaseId::GstokesDiv);
    let int_g: f64 = spaces.load_scalar(|x, y| g.divergence(x, y)).iter().sum();
    assert!(int_g.abs() < 1e-10, "{int_g}");
    for id in [CaseId::StokesTrig, CaseId::NseTrig, CaseId::GstokesDiv] {
        let c = ManufacturedCase::new(id);
        let int_p: f64 = spaces.load_scalar(|x, y| c.pressure(x, y)).iter().sum();
        assert!(int_p.abs() < 1e-10, "{id:?}: {int_p}");
    }
}

#[test]
fn larger_pressure_weight_does_not_lower_infsup() {
    let mesh = Mesh::unit_square(6, false).unwrap();
    let mut last = 0.0;
    for d in [0.01, 0.1, 1.0] {
        let mut st = StabilizationConfig::pressure(PressureStab::Bp);
        st.delta0_p = d;
        let p = Problem::assemble(
            &mesh,
            1,
            ProblemSpec {
                kind: ProblemKind::Stokes,
                mu: 1.0,
                stab: st,
            },
            &ProblemData::default(),
        )
        .unwrap();
        let g = estimate_infsup(&p.spaces, &p.blocks, &p.t, 0, 0)
            .unwrap()
            .gamma_stab;
        assert!(g >= last - 1e-12, "delta0_p = {d}: {g} < {last}");
        last = g;
    }
}
