use deltashell::exactref::exact_basis;
use deltashell::freespace::{ScatteringLengthFn, SquareWell};
use deltashell::trapbasis::*;
use deltashell::trapres::*;

fn test_well() -> SquareWell {
    SquareWell::new(489.9, 0.1).unwrap()
}

fn exact_data(l_max: usize, e_cut: f64) -> BasisData {
    let b = exact_basis(&test_well(), l_max, e_cut, -20.0).unwrap();
    BasisData::new(SampledBasis::from(&b))
}

fn well_factory(r_s: f64) -> BasisFactory {
    let w = test_well();
    let fns = vec![ScatteringLengthFn::square_well(w, 0), ScatteringLengthFn::square_well(w, 1)];
    BasisFactory::new(4, r_s, fns, 16.0, BasisOptions::default()).unwrap()
}

fn eigenvalues(data: &BasisData, dz: f64) -> Vec<f64> {
    real_eigenvalues(&build_h_matrix(data, dz).matrix).unwrap().0
}

// Normalized Legendre integral of x P_l P_l' on [-1, 1] by Gauss-free
// composite Simpson, independent of the closed form.
fn cos_matrix_element(l: usize, lp: usize) -> f64 {
    fn p(l: usize, x: f64) -> f64 {
        let (mut a, mut b) = (1.0, x);
        if l == 0 {
            return a;
        }
        for k in 1..l {
            let c = ((2 * k + 1) as f64 * x * b - k as f64 * a) / (k + 1) as f64;
            a = b;
            b = c;
        }
        b
    }
    let n = 20000;
    let h = 2.0 / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let x = -1.0 + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * x * p(l, x) * p(lp, x);
    }
    s * h / 3.0 * (((2 * l + 1) * (2 * lp + 1)) as f64).sqrt() / 2.0
}

#[test]
fn angular_coupling_against_quadrature() {
    assert!((angular_coupling(0, 1) - 0.577350269189626).abs() < 1e-12);
    for l in 0..7 {
        for lp in 0..7 {
            let q = cos_matrix_element(l, lp);
            assert!((angular_coupling(l, lp) - q).abs() < 1e-10, "{l} {lp}: {q}");
        }
    }
    assert_eq!(angular_coupling(2, 2), 0.0);
    assert_eq!(angular_coupling(1, 3), 0.0);
    assert_eq!(angular_coupling_m(1, 2, 2), 0.0);
    assert!((angular_coupling_m(1, 2, 1) - (3.0f64 / 15.0).sqrt()).abs() < 1e-15);
}

#[test]
fn zero_separation_is_diagonal() {
    let d = exact_data(4, 16.0);
    let h = build_h_matrix(&d, 0.0);
    for i in 0..d.len() {
        for j in 0..d.len() {
            let want = if i == j { d.basis.energies[i] } else { 0.0 };
            assert_eq!(h.matrix[(i, j)], want);
        }
    }
}

#[test]
fn exact_radial_matrix_is_symmetric() {
    let d = exact_data(4, 16.0);
    let r = &d.radial;
    let worst = (0..d.len())
        .flat_map(|i| (0..d.len()).map(move |j| (i, j)))
        .map(|(i, j)| (r[(i, j)] - r[(j, i)]).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
    assert!(r.amax() > 0.1);
}

#[test]
fn non_interacting_bases_coincide() {
    // beta = 0 on s and p against a basis with no interacting waves
    let zero = vec![ScatteringLengthFn::constant(0, 0.0), ScatteringLengthFn::constant(1, 0.0)];
    let a = BasisFactory::new(3, 0.05, zero, 12.0, BasisOptions::default()).unwrap().build(2.0).unwrap();
    let b = BasisFactory::new(3, 0.05, Vec::new(), 12.0, BasisOptions::default()).unwrap().build(2.0).unwrap();
    assert_eq!(a.len(), b.len());
    let (da, db) = (BasisData::new(SampledBasis::from(&a)), BasisData::new(SampledBasis::from(&b)));
    let (ha, hb) = (build_h_matrix(&da, 1.3), build_h_matrix(&db, 1.3));
    let diff = (&ha.matrix - &hb.matrix).amax();
    assert!(diff < 1e-8, "{diff}");
    // and both agree with the Hermitian construction
    let asym = (&hb.matrix - hb.matrix.transpose()).amax();
    assert!(asym < 1e-8, "{asym}");
}

#[test]
fn shift_identity() {
    let d = BasisData::new(SampledBasis::from(&well_factory(0.05).build(2.3).unwrap()));
    for dz in [0.3, 1.1, 2.7] {
        let a = real_eigenvalues(&build_h_matrix(&d, dz).matrix).unwrap().0;
        let b = real_eigenvalues(&build_h_matrix_unshifted(&d, dz).matrix).unwrap().0;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y - 0.5 * dz * dz).abs() < 1e-10 * x.abs().max(1.0));
        }
    }
}

#[test]
fn pseudopotential_spectrum_is_real() {
    let d = BasisData::new(SampledBasis::from(&well_factory(0.05).build(3.1).unwrap()));
    for dz in [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
        let (_, imag) = real_eigenvalues(&build_h_matrix(&d, dz).matrix).unwrap();
        assert!(imag < 1e-8, "dz = {dz}: {imag}");
    }
}

#[test]
fn m_blocks_are_independent() {
    let d = BasisData::new(SampledBasis::from(&well_factory(0.05).build(1.7).unwrap()));
    let m0 = eigenvalues(&d, 1.2);
    let (full, index) = build_h_matrix_with_m(&d, 1.2, &[-2, -1, 0, 1, 2]);
    assert!(index.len() > m0.len());
    let all = real_eigenvalues(&full).unwrap().0;
    for e in &m0 {
        let near = all.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min);
        assert!(near < 1e-10, "{e}");
    }
    let (only0, _) = build_h_matrix_with_m(&d, 1.2, &[0]);
    let b = real_eigenvalues(&only0).unwrap().0;
    for (x, y) in m0.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn eigen_system_is_biorthonormal() {
    let d = BasisData::new(SampledBasis::from(&well_factory(0.05).build(2.0).unwrap()));
    let h = build_h_matrix(&d, 1.0).matrix;
    let es = eigen_system(&h, false, None).unwrap();
    let n = h.nrows();
    let ytx = es.left.transpose() * &es.right;
    let resid = &h * &es.right - &es.right * nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(es.values.clone()));
    assert!((ytx - nalgebra::DMatrix::<f64>::identity(n, n)).amax() < 1e-8);
    assert!(resid.amax() < 1e-8 * h.amax());
}

#[test]
fn zero_separation_matches_busch() {
    let f = well_factory(0.05);
    let solver = SelfConsistentSolver::new(&f, SelfConsistencyOptions::default()).unwrap();
    let roots = solver.solve(0.0, 10).unwrap();
    let w = test_well();
    let mut busch = Vec::new();
    for l in 0..=1 {
        let b = busch_self_consistent(&ScatteringLengthFn::square_well(w, l), (-4.0, 3.0), BUSCH_SAMPLES_PER_UNIT).unwrap();
        busch.extend(b.into_iter().map(|nu| energy_of_nu(l, nu)).filter(|&e| e < 6.0));
    }
    for e in busch {
        let near = roots.iter().map(|r| (r.energy - e).abs()).fold(f64::INFINITY, f64::min);
        assert!(near < 1e-6, "Busch level {e}: {near}");
    }
    // the untouched waves stay at oscillator energies
    for e in [3.5, 4.5, 5.5] {
        assert!(roots.iter().any(|r| (r.energy - e).abs() < 1e-8), "{e}");
    }
}

#[test]
fn self_consistent_roots_satisfy_fixed_point() {
    let f = well_factory(0.05);
    let solver = SelfConsistentSolver::new(&f, SelfConsistencyOptions::default()).unwrap();
    let dz = 1.3;
    for r in solver.solve(dz, 8).unwrap().iter().take(8) {
        let d = solver.basis_at(r.e0).unwrap();
        let ev = eigenvalues(&d, dz);
        assert!((ev[r.index] - r.e0 - 0.5 * dz * dz).abs() < 1e-8);
        assert!((r.energy - r.e0 - 0.5 * dz * dz).abs() < 1e-12);
    }
}

#[test]
fn basis_size_convergence() {
    let (a, b) = (exact_data(12, 24.0), exact_data(12, 48.0));
    let (ea, eb) = (eigenvalues(&a, 2.0), eigenvalues(&b, 2.0));
    let worst = ea.iter().zip(&eb).take(8).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn small_separation_curvature_matches_perturbation_theory() {
    let d = exact_data(4, 24.0);
    let n = d.len();
    let ls = &d.basis.ls;
    let e = &d.basis.energies;
    let v = |i: usize, j: usize| angular_coupling(ls[j], ls[i]) * d.radial[(i, j)];
    let dz: Vec<f64> = (0..=10).map(|i| i as f64 * 0.01).collect();
    let curve = sweep_exact(&d, &dz, 7).unwrap();
    for k in 0..7 {
        let s: f64 = (0..n).filter(|&m| m != k).map(|m| v(k, m) * v(m, k) / (e[k] - e[m])).sum();
        let c = 0.5 + s;
        let pts = curve.track(k);
        let xs: Vec<f64> = pts.iter().map(|p| p.0 * p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let fit = quadratic_fit(&xs, &ys).unwrap();
        assert!((fit[0] - e[k]).abs() < 1e-7, "track {k}: {} {}", fit[0], e[k]);
        assert!((fit[1] - c).abs() < 1e-4 * c.abs().max(1.0), "track {k}: fit {} oracle {c}", fit[1]);
    }
}

#[test]
fn no_interaction_means_no_avoided_crossings() {
    let b = BasisFactory::new(12, 0.05, Vec::new(), 24.0, BasisOptions::default()).unwrap().build(1.0).unwrap();
    let d = BasisData::new(SampledBasis::from(&b));
    let dz: Vec<f64> = (0..=60).map(|i| i as f64 * 0.05).collect();
    let curve = sweep_exact(&d, &dz, 6).unwrap();
    let res = find_resonances(&curve, RESONANCE_GAP);
    assert!(res.iter().all(|r| r.kind == ResonanceKind::Crossing), "{res:?}");
    // free displaced oscillator: levels stay at N + 3/2
    for j in [20, 40] {
        let en = curve.energies(j);
        assert!((en[0] - 1.5).abs() < 1e-6, "{}", en[0]);
        assert!((en[1] - 2.5).abs() < 1e-6, "{}", en[1]);
    }
}

#[test]
fn k_partial_waves_shift_k_states_per_manifold() {
    // fixed operator with beta constant on the first k waves; eigenvalues
    // left at N + 3/2 count the unshifted states of each m = 0 manifold
    for k in 1..=2usize {
        let fns = (0..k).map(|l| ScatteringLengthFn::constant(l, if l == 0 { 0.3 } else { 0.05 })).collect();
        let f = BasisFactory::new(9, 0.05, fns, 26.0, BasisOptions::default()).unwrap();
        let d = BasisData::new(SampledBasis::from(&f.build(2.0).unwrap()));
        let ev = eigenvalues(&d, 0.6);
        for big_n in 0..4usize {
            let size = big_n / 2 + 1;
            let level = big_n as f64 + 1.5;
            let unshifted = ev.iter().filter(|&&x| (x - level).abs() < 1e-5).count();
            assert_eq!(unshifted, size - k.min(size), "k = {k}, N = {big_n}");
        }
    }
}

#[test]
fn lowest_track_rises_with_separation() {
    let d = exact_data(4, 16.0);
    let dz: Vec<f64> = (0..=30).map(|i| i as f64 * 0.1).collect();
    let curve = sweep_exact(&d, &dz, 4).unwrap();
    let t = curve.track(0);
    assert!((t[0].1 - 1.252).abs() < 1e-3);
    assert!(t.windows(2).all(|w| w[1].1 > w[0].1));
    let mut l0 = curve.points[0].iter().map(|p| p.l_character).collect::<Vec<_>>();
    l0.truncate(3);
    for (x, y) in l0.iter().zip([1.0, 0.0, 1.0]) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn resonances_on_a_synthetic_two_level_curve() {
    // E = +-sqrt((x - 1)^2 + g^2) with g = 0.05 has its minimum gap 2g at x = 1
    let g = 0.05;
    let dz: Vec<f64> = (0..=40).map(|i| 0.5 + i as f64 * 0.025).collect();
    let pts = dz
        .iter()
        .map(|&x| {
            let e = ((x - 1.0f64).powi(2) + g * g).sqrt();
            vec![(-e, 0), (e, 1)]
                .into_iter()
                .map(|(en, id)| TrackPoint {
                    delta_z: x,
                    track_id: id,
                    energy: en,
                    e0: None,
                    l_character: 0.0,
                    dominant_overlap: 1.0,
                    multiple: false,
                })
                .collect()
        })
        .collect();
    let curve = SpectrumCurve { delta_z: dz, points: pts };
    let r = find_resonances(&curve, RESONANCE_GAP);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].kind, ResonanceKind::Avoided);
    assert!((r[0].delta_z - 1.0).abs() < 1e-3, "{}", r[0].delta_z);
    assert!((r[0].gap - 2.0 * g).abs() < 2e-3, "{}", r[0].gap);
}

#[test]
fn spectrum_csv_layout() {
    let d = exact_data(4, 12.0);
    let curve = sweep_exact(&d, &[0.0, 0.1], 3).unwrap();
    let csv = curve.to_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "delta_z,track_id,E,E0,l_character,dominant_overlap");
    assert_eq!(lines.count(), 6);
}

#[test]
fn bad_grid_rejected() {
    let d = exact_data(4, 12.0);
    assert!(sweep_exact(&d, &[0.2, 0.1], 3).is_err());
    assert!(sweep_exact(&d, &[], 3).is_err());
}
