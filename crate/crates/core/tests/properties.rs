use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use qucert_core::circle::{assess_slope, build_omega, spr_eigen_test, spr_sweep_state_space, CertificationCase, SectorBounds};
use qucert_core::der::{DerModel, Pt2Params, QuCharacteristic};
use qucert_core::grid::{Branch, DerPlant, GridModel, Node, NodeKind};
use qucert_core::lti::{pade_delay, realize, RationalTransfer, StateSpace};
use qucert_core::powerflow::{self, injections_with, Network, PowerFlowOptions};

const SB: f64 = 100.0;

fn characteristic() -> impl Strategy<Value = QuCharacteristic> {
    (0.0..500.0f64, 0.0..0.05f64, 0.05..1.0f64, 1.0..50.0f64)
        .prop_map(|(slope, db, share, rated)| QuCharacteristic::new(1.0, slope, db, share, rated).unwrap())
}

proptest! {
    #[test]
    fn characteristic_stays_in_sector(ch in characteristic(), e in -0.5..0.5f64, sat in any::<bool>()) {
        let beta = ch.sector_bound(SB);
        let v = ch.response(e, SB, sat);
        prop_assert!(v * e >= 0.0);
        prop_assert!(v * e <= beta * e * e * (1.0 + 1e-12));
    }

    #[test]
    fn characteristic_is_odd(ch in characteristic(), e in -0.5..0.5f64, sat in any::<bool>()) {
        prop_assert_eq!(ch.response(-e, SB, sat), -ch.response(e, SB, sat));
    }

    #[test]
    fn characteristic_is_monotone(ch in characteristic(), a in -0.5..0.5f64, b in -0.5..0.5f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(ch.response(lo, SB, true) <= ch.response(hi, SB, true));
        prop_assert!(ch.evaluate(1.0 + lo, SB) <= ch.evaluate(1.0 + hi, SB));
    }

    #[test]
    fn pade_is_all_pass(t in 0.0..1.0f64, order in 1usize..=5, w in 1e-3..1e3f64) {
        let p = pade_delay(t, order).unwrap();
        prop_assert!((p.freq(w).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn realization_matches_rational(
        num in prop::collection::vec(-2.0..2.0f64, 1..4),
        roots in prop::collection::vec(0.1..10.0f64, 3..5),
        w in 1e-2..1e2f64,
    ) {
        let mut den = vec![1.0];
        for r in &roots {
            den = qucert_core::lti::poly::mul(&den, &[1.0, 1.0 / r]);
        }
        let g = RationalTransfer::new(num, den).unwrap();
        let ss = realize(&g);
        let want = g.freq(w);
        let got = ss.freq(w).unwrap()[(0, 0)];
        prop_assert!((got - want).norm() <= 1e-9 * want.norm().max(1.0));
    }
}

fn pt2_case(params: &[Pt2Params], k_q: DMatrix<f64>, rated: &[f64]) -> CertificationCase {
    let loops = params.iter().map(|p| DerModel::Pt2(*p).control_loop().unwrap()).collect();
    let ids = (0..params.len()).map(|i| format!("d{i}")).collect();
    CertificationCase::new(ids, loops, rated.to_vec(), SB, k_q, 3).unwrap()
}

fn pt2_params() -> impl Strategy<Value = Pt2Params> {
    (0.2..1.5f64, 0.2..5.0f64).prop_map(|(d, t)| Pt2Params { gain: 1.0, damping: d, time_constant: t })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// `M_β G̃` is unchanged when β doubles and `K_Q` halves.
    #[test]
    fn beta_kq_scaling_invariance(
        ps in prop::collection::vec(pt2_params(), 2..4),
        kdiag in 0.2..3.0f64,
        coupling in 0.0..0.8f64,
        m in 1.0..3000.0f64,
    ) {
        let n = ps.len();
        let k = DMatrix::from_fn(n, n, |i, j| if i == j { kdiag } else { coupling * kdiag / (1.0 + (i + j) as f64) });
        let rated = vec![10.0; n];
        let a = pt2_case(&ps, k.clone(), &rated);
        let b = pt2_case(&ps, k * 0.5, &rated);
        let va = assess_slope(&a, m, 1e-8).unwrap();
        let vb = assess_slope(&b, 2.0 * m, 1e-8).unwrap();
        prop_assert_eq!(va.is_spr, vb.is_spr);
    }

    #[test]
    fn zero_slope_always_certifies(ps in prop::collection::vec(pt2_params(), 1..4), kdiag in 0.1..5.0f64) {
        let n = ps.len();
        let case = pt2_case(&ps, DMatrix::identity(n, n) * kdiag, &vec![20.0; n]);
        prop_assert!(assess_slope(&case, 0.0, 1e-8).unwrap().is_spr);
    }
}

fn random_stable(seed: &[f64], n: usize, m: usize) -> StateSpace {
    let mut it = seed.iter().cycle().copied();
    let mut next = move || it.next().unwrap();
    let raw = DMatrix::from_fn(n, n, |_, _| next());
    let shift = qucert_core::lti::spectral_abscissa(&raw).unwrap() + 0.05 + next().abs();
    let a = raw - DMatrix::identity(n, n) * shift;
    let b = DMatrix::from_fn(n, m, |_, _| next());
    let c = DMatrix::from_fn(m, n, |_, _| next());
    StateSpace::new(a, b, c, DMatrix::zeros(m, m)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// The eigenvalue test and a dense frequency sweep give the same verdict.
    #[test]
    fn spr_eigen_and_sweep_agree(
        seed in prop::collection::vec(-1.0..1.0f64, 64),
        n in 1usize..6,
        m in 1usize..4,
        betas in prop::collection::vec(0.0..3.0f64, 3),
    ) {
        let g = random_stable(&seed, n, m);
        let omega = build_omega(&g, &SectorBounds::new(betas[..m].to_vec()).unwrap()).unwrap();
        let eig = spr_eigen_test(&omega, 1e-8).unwrap();
        let grid: Vec<f64> = (0..20_000).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 19_999.0)).collect();
        let sweep = spr_sweep_state_space(&omega, &grid, 1e-8).unwrap();
        // skip razor-thin cases where a finite grid cannot decide
        prop_assume!(sweep.min_eigenvalue.abs() > 1e-4);
        prop_assert_eq!(eig.is_spr, sweep.is_spr, "min eig {} at {}", sweep.min_eigenvalue, sweep.at_omega);
    }
}

/// Radial feeder with DERs at the given node positions.
fn radial(lengths: &[f64], der_at: &[usize], p_mw: f64) -> GridModel {
    let mut nodes = vec![Node { id: "n0".into(), vn_kv: 20.0, kind: NodeKind::Slack, u_set: Some(1.0) }];
    let mut branches = Vec::new();
    for (i, &l) in lengths.iter().enumerate() {
        nodes.push(Node { id: format!("n{}", i + 1), vn_kv: 20.0, kind: NodeKind::Pq, u_set: None });
        branches.push(Branch {
            id: format!("l{i}"),
            from: format!("n{i}"),
            to: format!("n{}", i + 1),
            r_ohm: 0.1 * l,
            x_ohm: 0.4 * l,
            b_us: 0.0,
            length_km: l,
        });
    }
    let ders = der_at
        .iter()
        .enumerate()
        .map(|(k, &node)| DerPlant {
            id: format!("d{k}"),
            node: format!("n{node}"),
            p_inst_mw: p_mw,
            p_r_mw: p_mw,
            p_op_mw: p_mw,
            model: DerModel::Pt2(Pt2Params::TAR),
            qu: QuCharacteristic::new(1.0, 10.0, 0.0, 0.33, p_mw).unwrap(),
        })
        .collect();
    let g = GridModel {
        base_mva: SB,
        nodes,
        branches,
        transformers: vec![],
        loads: vec![],
        ders,
        total_length_km: None,
    };
    g.validate().unwrap();
    g
}

fn feeder() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, f64)> {
    (prop::collection::vec(1.0..8.0f64, 2..6), 0.5..8.0f64).prop_flat_map(|(lengths, p)| {
        let n = lengths.len();
        (Just(lengths), prop::collection::vec(1..=n, 1..3), Just(p))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sensitivity_matches_finite_differences((lengths, der_at, p) in feeder()) {
        let g = radial(&lengths, &der_at, p);
        let tight = PowerFlowOptions { tolerance: 1e-13, max_iterations: 50 };
        let net = Network::from_grid(&g).unwrap();
        let base = powerflow::operating_injections(&g);
        let sol = net.solve(&base, None, &tight).unwrap();
        let kq = powerflow::sensitivity(&g, &sol).unwrap();
        let nodes = powerflow::der_node_indices(&g);
        let h = 1e-4;
        for j in 0..g.ders.len() {
            let solve_q = |dq: f64| {
                let inj = injections_with(&g, |k| g.ders[k].p_op_mw, |k| if k == j { dq * SB } else { 0.0 });
                net.solve(&inj, None, &tight).unwrap()
            };
            let (up, down) = (solve_q(h), solve_q(-h));
            for i in 0..g.ders.len() {
                let fd = (up.voltages[nodes[i]] - down.voltages[nodes[i]]) / (2.0 * h);
                let k = kq.entries[(i, j)];
                prop_assert!((k - fd).abs() <= 1e-4 * k.abs().max(1e-3), "K[{i}][{j}] = {k}, fd = {fd}");
                // radial and predominantly reactive
                prop_assert!(k >= 0.0);
            }
        }
    }

    #[test]
    fn converged_start_needs_at_most_two_iterations((lengths, der_at, p) in feeder()) {
        let g = radial(&lengths, &der_at, p);
        let net = Network::from_grid(&g).unwrap();
        let inj = powerflow::operating_injections(&g);
        let opts = PowerFlowOptions::default();
        let sol = net.solve(&inj, None, &opts).unwrap();
        prop_assert!(net.solve(&inj, Some(&sol), &opts).unwrap().iterations <= 2);
    }

    #[test]
    fn penetration_scales_linearly((lengths, der_at, p) in feeder(), c in 0.1..10.0f64) {
        let g = radial(&lengths, &der_at, p);
        let rho = g.penetration_factor().unwrap();
        let mut more_power = g.clone();
        for d in &mut more_power.ders {
            d.p_inst_mw *= c;
        }
        let mut longer = g.clone();
        for b in &mut longer.branches {
            b.length_km *= c;
        }
        prop_assert!((more_power.penetration_factor().unwrap() - c * rho).abs() <= 1e-9 * c * rho);
        prop_assert!((longer.penetration_factor().unwrap() - rho / c).abs() <= 1e-9 * rho / c);
    }
}

#[test]
fn penetration_reference_row() {
    let mut g = radial(&[1.0], &[1], 480.0);
    g.total_length_km = Some(342.857);
    assert!((g.penetration_factor().unwrap() - 1400.0).abs() < 0.01);
    g.ders.clear();
    assert_eq!(g.penetration_factor().unwrap(), 0.0);
}

#[test]
fn hermitian_part_of_diagonal() {
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::new(0.5, 3.0), Complex64::new(-0.25, -1.0)]));
    let v = qucert_core::circle::hermitian_part_min_eigenvalue(&m);
    assert!((v + 0.5).abs() < 1e-12);
}
