use helmlayer::discretization::{dense_matvec_rows, kernel_entry};
use helmlayer::fmm::*;
use helmlayer::geometry::*;
use helmlayer::layered_media::{ComponentId, Dir, LayerStack};
use helmlayer::sommerfeld::{RuleConfig, SommerfeldRule};
use helmlayer::special_functions::hankel0;
use helmlayer::Complex64;
use rand::{Rng, SeedableRng};

fn ex1() -> LayerStack {
    LayerStack::new(vec![0.0, 1.0, 2.0, 3.0], vec![3.2, 2.5, 5.1, 8.6, 6.9], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap()
}

fn free(k: f64, r: [f64; 2], s: [f64; 2]) -> Complex64 {
    hankel0(k * (r[0] - s[0]).hypot(r[1] - s[1])) * Complex64::new(0.0, 0.25)
}

fn cloud(rng: &mut impl Rng, c: [f64; 2], rho: f64, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            let (r, t) = (rho * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU));
            [c[0] + r * t.cos(), c[1] + r * t.sin()]
        })
        .collect()
}

fn charges(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

#[test]
fn quadtree_partitions_points() {
    let t = build_tree(&[[0.3, 0.4]], 60, 30).unwrap();
    assert_eq!(t.boxes.len(), 1);
    assert!(t.boxes[0].is_leaf());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let pts = cloud(&mut rng, [1.0, -2.0], 3.0, 1000);
    let t = build_tree(&pts, 60, 30).unwrap();
    let mut seen = vec![0; pts.len()];
    for b in t.leaves() {
        assert!(t.points_of(b).len() <= 60);
        for &i in t.points_of(b) {
            seen[i] += 1;
            let bx = &t.boxes[b];
            let d = (pts[i][0] - bx.center[0]).hypot(pts[i][1] - bx.center[1]);
            assert!(d <= bx.radius + 1e-15);
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
    for (b, bx) in t.boxes.iter().enumerate() {
        for &c in &bx.children {
            assert!(c > b);
            assert!(bx.range.start <= t.boxes[c].range.start && t.boxes[c].range.end <= bx.range.end);
        }
    }
    assert!(matches!(build_tree(&vec![[0.0, 0.0]; 5], 2, 10), Err(FmmError::DepthCap { .. })));
}

#[test]
fn zero_shift_translations_are_identities() {
    let mut tr = Translator::new(2.5, 12);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let a = charges(&mut rng, 25);
    let mut b = vec![Complex64::new(0.0, 0.0); 25];
    tr.m2m([0.0, 0.0], &a, &mut b);
    assert!(rel(&b, &a) < 1e-15);
    let mut c = vec![Complex64::new(0.0, 0.0); 25];
    tr.l2l([0.0, 0.0], &a, &mut c);
    assert!(rel(&c, &a) < 1e-15);
}

/// P2M at a child, M2M, M2L, L2L to a child, L2P; against direct sums.
fn free_pipeline_error(p: usize) -> f64 {
    let k = 3.2;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let (cs, ct) = ([0.0, 0.0], [2.4, 1.1]);
    let (cs1, ct1) = ([0.12, -0.1], [2.3, 1.2]);
    let src = cloud(&mut rng, cs1, 0.2, 40);
    let tgt = cloud(&mut rng, ct1, 0.2, 30);
    let q = charges(&mut rng, src.len());
    let mut tr = Translator::new(k, p);
    let nc = 2 * p + 1;
    let mut a1 = vec![Complex64::new(0.0, 0.0); nc];
    for (s, qq) in src.iter().zip(&q) {
        tr.p2m([s[0] - cs1[0], s[1] - cs1[1]], *qq, &mut a1);
    }
    let mut a = vec![Complex64::new(0.0, 0.0); nc];
    tr.m2m([cs1[0] - cs[0], cs1[1] - cs[1]], &a1, &mut a);
    let mut b = vec![Complex64::new(0.0, 0.0); nc];
    tr.m2l([ct[0] - cs[0], ct[1] - cs[1]], &a, &mut b);
    let mut b1 = vec![Complex64::new(0.0, 0.0); nc];
    tr.l2l([ct1[0] - ct[0], ct1[1] - ct[1]], &b, &mut b1);
    let fast: Vec<Complex64> = tgt.iter().map(|t| tr.l2p([t[0] - ct1[0], t[1] - ct1[1]], &b1)).collect();
    let direct: Vec<Complex64> = tgt.iter().map(|t| src.iter().zip(&q).map(|(s, qq)| free(k, *t, *s) * qq).sum()).collect();
    // the far-field form of the multipole agrees too
    let m2p: Vec<Complex64> = tgt.iter().map(|t| tr.m2p([t[0] - cs[0], t[1] - cs[1]], &a)).collect();
    rel(&fast, &direct).max(rel(&m2p, &direct))
}

#[test]
fn free_space_pipeline_converges_in_p() {
    let errs: Vec<f64> = [10, 15, 20, 25].iter().map(|&p| free_pipeline_error(p)).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[3] < 1e-9, "{errs:?}");
}

fn reaction_pipeline_error(rule: &SommerfeldRule, id: ComponentId, ct: [f64; 2], cs: [f64; 2], rho: f64, p: usize) -> f64 {
    let s = rule.stack();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let src = cloud(&mut rng, cs, rho, 30);
    let tgt = cloud(&mut rng, ct, rho, 20);
    let q = charges(&mut rng, src.len());
    let (kt, ks) = (s.k(id.target), s.k(id.source));
    let nc = 2 * p + 1;
    let mut a = vec![Complex64::new(0.0, 0.0); nc];
    let mut trs = Translator::new(ks, p);
    for (x, qq) in src.iter().zip(&q) {
        trs.p2m([x[0] - cs[0], x[1] - cs[1]], *qq, &mut a);
    }
    let t = reaction_translation(rule, id, ct, cs, 2.0 * rho, p).unwrap();
    let b: Vec<Complex64> = t.chunks(nc).map(|row| row.iter().zip(&a).map(|(x, y)| x * y).sum()).collect();
    let mut trt = Translator::new(kt, p);
    let fast: Vec<Complex64> = tgt.iter().map(|x| trt.l2p([x[0] - ct[0], x[1] - ct[1]], &b)).collect();
    let direct: Vec<Complex64> =
        tgt.iter().map(|x| src.iter().zip(&q).map(|(y, qq)| rule.reaction_component(id, *x, *y) * qq).sum()).collect();
    rel(&fast, &direct)
}

#[test]
fn reaction_pipeline_converges_in_p() {
    let rule = SommerfeldRule::build(&ex1(), RuleConfig::default()).unwrap();
    let cases = [
        (ComponentId::new(1, 1, Dir::Up, Dir::Down), [1.4, -0.5], [-0.2, -0.5], 0.4),
        (ComponentId::new(1, 2, Dir::Up, Dir::Up), [0.3, -0.5], [-0.9, -1.5], 0.35),
        (ComponentId::new(2, 1, Dir::Down, Dir::Down), [0.3, -1.5], [-0.9, -0.5], 0.35),
    ];
    for (id, ct, cs, rho) in cases {
        let errs: Vec<f64> = [10, 15, 20, 25].iter().map(|&p| reaction_pipeline_error(&rule, id, ct, cs, rho, p)).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{id:?} {errs:?}");
        assert!(errs[3] < 1e-7, "{id:?} {errs:?}");
    }
}

#[test]
fn layered_fmm_matches_direct_sums() {
    let s = ex1();
    let rule = SommerfeldRule::build(&s, RuleConfig::default()).unwrap();
    let mesh = PanelMesh::new(vec![make_lshape()], &[300], &s).unwrap();
    let pts: Vec<[f64; 2]> = mesh.panels.iter().map(|p| p.center).collect();
    let cfg = FmmConfig { leaf_size: 16, ..FmmConfig::default() };
    let fmm = LayeredFmm::new_self(&rule, &pts, cfg.clone()).unwrap();
    assert!(fmm.stats.free_m2l > 0 && fmm.stats.reaction_m2l > 0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let q = charges(&mut rng, pts.len());
    let pot = fmm.apply(&q);
    assert_eq!(pot, fmm.apply(&q));
    let rows: Vec<usize> = (0..pts.len()).step_by(29).collect();
    let direct: Vec<Complex64> = rows
        .iter()
        .map(|&i| {
            (0..pts.len())
                .map(|e| if e == i { rule.reaction_green(pts[i], pts[e]) } else { rule.layered_green(pts[i], pts[e]) } * q[e])
                .sum()
        })
        .collect();
    let fast: Vec<Complex64> = rows.iter().map(|&i| pot[i]).collect();
    assert!(rel(&fast, &direct) < 1e-8, "{}", rel(&fast, &direct));

    // separate targets spread over every layer
    let targets: Vec<[f64; 2]> = (0..40).map(|j| [-3.0 + 0.15 * j as f64, 1.2 - 0.12 * j as f64]).collect();
    let f2 = LayeredFmm::new(&rule, &pts, &targets, cfg.clone()).unwrap();
    let pot = f2.apply(&q);
    let direct: Vec<Complex64> = targets.iter().map(|t| pts.iter().zip(&q).map(|(x, qq)| rule.layered_green(*t, *x) * qq).sum()).collect();
    assert!(rel(&pot, &direct) < 1e-8, "{}", rel(&pot, &direct));

    // translations through the contour nodes instead of per-pair matrices
    let nodal = FmmConfig { reaction_matrices: false, ..cfg.clone() };
    let f3 = LayeredFmm::new(&rule, &pts, &targets, nodal.clone()).unwrap();
    assert_eq!(f3.stats.reaction_blocks, 0);
    assert!(rel(&f3.apply(&q), &pot) < 1e-12);
    let f4 = LayeredFmm::new_self(&rule, &pts, nodal).unwrap();
    assert!(rel(&f4.apply(&q), &fmm.apply(&q)) < 1e-12);
}

#[test]
fn matched_stack_reduces_to_free_space() {
    let s = LayerStack::new(vec![0.0, 1.5], vec![2.0; 3], vec![1.0; 3]).unwrap();
    let rule = SommerfeldRule::build(&s, RuleConfig::default()).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let pts = cloud(&mut rng, [0.0, -0.5], 3.0, 600);
    let q = charges(&mut rng, pts.len());
    let fmm = LayeredFmm::new_self(&rule, &pts, FmmConfig { leaf_size: 20, ..FmmConfig::default() }).unwrap();
    assert_eq!(fmm.stats.reaction_m2l, 0);
    let pot = fmm.apply(&q);
    let direct: Vec<Complex64> =
        (0..pts.len()).map(|i| (0..pts.len()).filter(|&e| e != i).map(|e| free(2.0, pts[i], pts[e]) * q[e]).sum()).collect();
    assert!(rel(&pot, &direct) < 1e-8, "{}", rel(&pot, &direct));
}

#[test]
fn nystrom_operator_matches_dense_rows() {
    let s = ex1();
    let rule = SommerfeldRule::build(&s, RuleConfig::default()).unwrap();
    let mesh = PanelMesh::new(vec![make_lshape()], &[200], &s).unwrap();
    let op = NystromOperator::new(&mesh, &rule, FmmConfig { leaf_size: 16, ..FmmConfig::default() }).unwrap();
    let n = op.len();
    assert!(op.apply(&vec![Complex64::new(0.0, 0.0); n]).iter().all(|v| v.norm() == 0.0));
    let j = 37;
    let mut ej = vec![Complex64::new(0.0, 0.0); n];
    ej[j] = Complex64::new(1.0, 0.0);
    let col = op.apply(&ej);
    let dense: Vec<Complex64> = (0..n).map(|i| kernel_entry(&mesh, &rule, i, j)).collect();
    assert!(rel(&col, &dense) < 1e-6, "{}", rel(&col, &dense));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let phi = charges(&mut rng, n);
    let rows: Vec<usize> = (0..n).step_by(23).collect();
    let full = op.apply(&phi);
    let fast: Vec<Complex64> = rows.iter().map(|&i| full[i]).collect();
    assert!(rel(&fast, &dense_matvec_rows(&mesh, &rule, &phi, &rows)) < 1e-6);
}

#[test]
fn leaf_halos_cover_every_point_once() {
    let s = ex1();
    let rule = SommerfeldRule::build(&s, RuleConfig::default()).unwrap();
    let mesh = PanelMesh::new(vec![make_lshape()], &[400], &s).unwrap();
    let pts: Vec<[f64; 2]> = mesh.panels.iter().map(|p| p.center).collect();
    let fmm = LayeredFmm::new_self(&rule, &pts, FmmConfig { leaf_size: 20, ..FmmConfig::default() }).unwrap();
    let mut seen = vec![0; pts.len()];
    for (own, halo) in fmm.leaf_halos() {
        assert_eq!(&halo[..own.len()], &own[..]);
        let l = mesh.panels[own[0]].layer;
        assert!(halo.iter().all(|&i| mesh.panels[i].layer == l));
        own.iter().for_each(|&i| seen[i] += 1);
    }
    assert!(seen.iter().all(|&c| c == 1));
}
