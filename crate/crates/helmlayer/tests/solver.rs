use helmlayer::discretization::{assemble_dense, dense_matvec, rhs, Excitation, DENSE_CAP};
use helmlayer::fmm::{FmmConfig, NystromOperator};
use helmlayer::geometry::*;
use helmlayer::layered_media::{LayerStack, PlaneWaveField};
use helmlayer::solver::*;
use helmlayer::sommerfeld::{RuleConfig, SommerfeldRule};
use helmlayer::Complex64;
use rand::{Rng, SeedableRng};

fn rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn random(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn two_layer() -> LayerStack {
    LayerStack::new(vec![0.0], vec![2.0, 3.0], vec![1.0, 1.5]).unwrap()
}

#[test]
fn single_leaf_preconditioner_inverts_free_space_system() {
    let s = LayerStack::new(vec![5.0], vec![2.5, 2.5], vec![1.0, 1.0]).unwrap();
    let rule = SommerfeldRule::build(&s, RuleConfig::default()).unwrap();
    let mesh = PanelMesh::new(vec![make_star([0.0, 0.0], 0.3, 1.0, 3.0, 0.2).unwrap()], &[120], &s).unwrap();
    let op = NystromOperator::new(&mesh, &rule, FmmConfig { leaf_size: 500, ..FmmConfig::default() }).unwrap();
    let pre = LeafPreconditioner::build(&mesh, &s, &op.fmm);
    assert_eq!(pre.blocks.len(), 1);
    let x = random(mesh.len(), 1);
    let back = pre.apply(&op.apply(&x));
    assert!(rel(&back, &x) < 1e-10, "{}", rel(&back, &x));
    assert!(pre.apply(&vec![Complex64::new(0.0, 0.0); mesh.len()]).iter().all(|v| v.norm() == 0.0));
}

#[test]
fn preconditioner_is_linear_and_partitions_rows() {
    let s = two_layer();
    let rule = SommerfeldRule::build(&s, RuleConfig::default()).unwrap();
    let mesh = PanelMesh::new(vec![make_star([0.0, 0.0], 0.3, 1.0, 3.0, 0.2).unwrap()], &[300], &s).unwrap();
    let op = NystromOperator::new(&mesh, &rule, FmmConfig { leaf_size: 30, ..FmmConfig::default() }).unwrap();
    let pre = LeafPreconditioner::build(&mesh, &s, &op.fmm);
    assert!(pre.blocks.len() > 4);
    assert_eq!(pre.fallbacks(), 0);
    let mut seen = vec![0; mesh.len()];
    for b in &pre.blocks {
        assert!(b.halo.len() <= 9 * 30);
        b.owned.iter().for_each(|&i| seen[i] += 1);
    }
    assert!(seen.iter().all(|&c| c == 1));
    let (v, w) = (random(mesh.len(), 2), random(mesh.len(), 3));
    let (a, c) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5));
    let comb: Vec<Complex64> = v.iter().zip(&w).map(|(x, y)| a * x + c * y).collect();
    let lhs = pre.apply(&comb);
    let (pv, pw) = (pre.apply(&v), pre.apply(&w));
    let rhs: Vec<Complex64> = pv.iter().zip(&pw).map(|(x, y)| a * x + c * y).collect();
    assert!(rel(&lhs, &rhs) < 1e-12);
}

#[test]
fn gmres_trivial_and_restarted() {
    let b = random(20, 4);
    let k = |x: &[Complex64]| x.iter().map(|z| z * 2.0).collect::<Vec<_>>();
    let r = gmres(&k, None, &b, &GmresConfig::default(), &NoClock);
    assert!(r.report.converged && r.report.iterations == 1);
    assert!(rel(&r.x, &b.iter().map(|z| z * 0.5).collect::<Vec<_>>()) < 1e-14);

    // diagonal with spread spectrum, with restarts
    let d: Vec<Complex64> = (0..60).map(|i| Complex64::new(1.0 + i as f64 * 0.1, 0.3 * (i as f64).sin())).collect();
    let b = random(60, 5);
    let k = |x: &[Complex64]| x.iter().zip(&d).map(|(a, c)| a * c).collect::<Vec<_>>();
    let cfg = GmresConfig { restart: Some(8), ..GmresConfig::default() };
    let r = gmres(&k, None, &b, &cfg, &NoClock);
    assert!(r.report.converged && r.report.final_residual < 1e-7);
    let zero = gmres(&k, None, &vec![Complex64::new(0.0, 0.0); 60], &cfg, &NoClock);
    assert_eq!(zero.report.iterations, 0);
}

#[test]
fn dense_and_fast_paths_agree() {
    let s = two_layer();
    let rule = SommerfeldRule::build(&s, RuleConfig::default()).unwrap();
    let mesh = PanelMesh::new(vec![make_star([0.2, 0.1], 0.3, 0.8, 3.0, 0.0).unwrap()], &[150], &s).unwrap();
    let ex = Excitation::PlaneWave(PlaneWaveField::from_angle(&s, 0.3).unwrap());
    let b = rhs(&mesh, &rule, &ex);
    let dense = assemble_dense(&mesh, &rule, DENSE_CAP).unwrap();
    let kd = |x: &[Complex64]| dense_matvec(&dense, x);
    let rd = gmres(&kd, None, &b, &GmresConfig::default(), &NoClock);
    let op = NystromOperator::new(&mesh, &rule, FmmConfig { leaf_size: 16, ..FmmConfig::default() }).unwrap();
    let pre = LeafPreconditioner::build(&mesh, &s, &op.fmm);
    let kf = |x: &[Complex64]| op.apply(x);
    let mf = |x: &[Complex64]| pre.apply(x);
    let rf = gmres(&kf, Some(&mf), &b, &GmresConfig::default(), &NoClock);
    let ru = gmres(&kf, None, &b, &GmresConfig::default(), &NoClock);
    assert!(rd.report.converged && rf.report.converged && ru.report.converged);
    assert!(rel(&rf.x, &rd.x) < 1e-5, "{}", rel(&rf.x, &rd.x));
    // both stop at a 1e-8 residual, so they agree to the conditioning times that
    assert!(rel(&rf.x, &ru.x) < 1e-5, "{}", rel(&rf.x, &ru.x));
    assert!(rel(&ru.x, &rd.x) < 1e-10);
    assert!(rf.report.iterations < ru.report.iterations, "{} {}", rf.report.iterations, ru.report.iterations);
    for h in [&rd.report.history, &rf.report.history, &ru.report.history] {
        assert!(h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
    assert!(ru.report.final_residual < 1e-7);
}

#[test]
fn empty_scene_is_rejected() {
    let s = two_layer();
    let scene = Scene {
        stack: s.clone(),
        curves: vec![],
        panels: vec![],
        excitation: Excitation::PointSource([0.0, 0.0]),
        rule: RuleConfig::default(),
        fmm: FmmConfig::default(),
        gmres: GmresConfig::default(),
        precondition: true,
    };
    assert!(matches!(solve_scene(&scene, &NoClock), Err(SolveError::NothingToSolve)));
}

#[test]
fn manufactured_solution_is_recovered() {
    let s = two_layer();
    let curve = make_star([0.0, 0.0], 0.2, 0.8, 3.0, 0.0).unwrap();
    let src = [0.05, 0.1];
    let scene = Scene {
        stack: s.clone(),
        curves: vec![curve],
        panels: vec![400],
        excitation: Excitation::PointSource(src),
        rule: RuleConfig::default(),
        fmm: FmmConfig::default(),
        gmres: GmresConfig::default(),
        precondition: true,
    };
    let sol = solve_scene(&scene, &NoClock).unwrap();
    assert!(sol.report.converged);
    let probes = [[2.0, 0.5], [-1.5, -1.0], [0.3, -2.0], [1.0, 1.6]];
    let u = sol.field(&probes, &FmmConfig::default()).unwrap();
    for (p, v) in probes.iter().zip(&u) {
        let exact = sol.rule.layered_green(*p, src);
        assert!((v - exact).norm() < 1e-2 * exact.norm(), "{p:?} {v} {exact}");
    }
}

#[test]
fn probes_sit_outside_and_errors_normalize() {
    let s = two_layer();
    let curve = make_star([0.0, 0.0], 0.2, 0.8, 3.0, 0.0).unwrap();
    let per = curve.perimeter();
    let (pts, w) = boundary_probes(&[curve.clone()], 64, 0.1, &s).unwrap();
    assert_eq!(pts.len(), 64);
    assert!(pts.iter().all(|p| !curve.contains(*p)));
    assert!((w.iter().sum::<f64>() - per).abs() < 0.05 * per);
    let (lpts, _) = boundary_probes(&[make_lshape()], 128, 0.1, &s).unwrap();
    assert!(!lpts.is_empty() && lpts.len() <= 128);
    let u = random(pts.len(), 6);
    assert_eq!(probe_errors(&u, &u, &w), (0.0, 0.0));
    let twice: Vec<Complex64> = u.iter().map(|z| z * 2.0).collect();
    let (a, b) = probe_errors(&twice, &u, &w);
    assert!((a - 1.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);
}

#[test]
fn loglog_slope_fits_power_laws() {
    let n = [1000.0, 2000.0, 4000.0, 8000.0];
    let t: Vec<f64> = n.iter().map(|x| 3e-6 * x * f64::sqrt(*x)).collect();
    assert!((loglog_slope(&n, &t).unwrap() - 1.5).abs() < 1e-12);
    assert_eq!(loglog_slope(&n[..1], &t[..1]), None);
    assert_eq!(loglog_slope(&[5.0, 5.0], &[1.0, 2.0]), None);
}

#[test]
fn shared_operator_runs_match_single_solves() {
    let s = two_layer();
    let scene = Scene {
        stack: s.clone(),
        curves: vec![make_star([0.0, -0.9], 0.2, 0.5, 3.0, 0.0).unwrap()],
        panels: vec![200],
        excitation: Excitation::PlaneWave(PlaneWaveField::new(&s, 0.5, 1.9).unwrap()),
        rule: RuleConfig::default(),
        fmm: FmmConfig { leaf_size: 20, ..FmmConfig::default() },
        gmres: GmresConfig::default(),
        precondition: true,
    };
    let runs = solve_scene_runs(&scene, &NoClock, &[false, true]).unwrap();
    let single = solve_scene(&scene, &NoClock).unwrap();
    assert_eq!(runs[1].phi, single.phi);
    assert_eq!(runs[1].report.iterations, single.report.iterations);
    assert!(runs[1].report.iterations < runs[0].report.iterations);
    assert!(rel(&runs[0].phi, &runs[1].phi) < 1e-5);
    let (n, t) = iteration_time(&scene, &NoClock, 2).unwrap();
    assert_eq!((n, t), (200, 0.0));
}
