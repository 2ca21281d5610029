use helmlayer::geometry::*;
use helmlayer::layered_media::LayerStack;

fn ex1_stack() -> LayerStack {
    LayerStack::new(vec![0.0, 1.0, 2.0, 3.0], vec![3.2, 2.5, 5.1, 8.6, 6.9], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap()
}

fn far_stack() -> LayerStack {
    LayerStack::new(vec![10.0], vec![1.0, 2.0], vec![1.0, 1.0]).unwrap()
}

fn star(center: [f64; 2], k: f64, a: f64, b: f64, t0: f64) -> BoundaryCurve {
    make_star(center, a, b, k, t0).unwrap()
}

#[test]
fn circle_panels_are_regular() {
    let c = star([0.0, 0.0], 1.0, 0.0, 1.0, 0.0);
    let p = panelize(&c, 16, &far_stack(), 0).unwrap();
    assert_eq!(p.len(), 16);
    let pi = std::f64::consts::PI;
    for (m, q) in p.iter().enumerate() {
        let th = pi / 16.0 + m as f64 * pi / 8.0;
        let r = (pi / 16.0).cos();
        assert!((q.center[0] - r * th.cos()).abs() < 1e-12 && (q.center[1] - r * th.sin()).abs() < 1e-12);
        assert!((q.length - 2.0 * (pi / 16.0).sin()).abs() < 1e-12);
        // outward normal points away from the origin
        let n = q.normal();
        assert!(n[0] * q.center[0] + n[1] * q.center[1] > 0.0);
    }
}

#[test]
fn lshape_perimeter_and_orientation() {
    let l = make_lshape();
    assert!((l.perimeter() - 12.5).abs() < 1e-14);
    let p = panelize(&l, 100, &ex1_stack(), 0).unwrap();
    let total: f64 = p.iter().map(|q| q.length).sum();
    assert!((total - 12.5).abs() < 1e-12);
    // counterclockwise: shoelace area over panel endpoints
    let area: f64 = p.iter().map(|q| 0.5 * (q.start[0] * q.end[1] - q.end[0] * q.start[1])).sum();
    assert!((area - 6.375).abs() < 1e-12);
}

#[test]
fn panels_never_straddle_interfaces() {
    let stack = ex1_stack();
    let shapes = vec![
        make_lshape(),
        star([0.0, -1.0], 2.0, 0.5, 1.0, std::f64::consts::FRAC_PI_4),
        star([2.0, -3.0], 2.0, 0.5, 1.0, std::f64::consts::FRAC_PI_4),
        star([-1.5, -4.0], 5.0, 0.2, 0.7, 0.0),
    ];
    for s in &shapes {
        for n in [16, 64, 257, 1000] {
            let p = panelize(s, n, &stack, 0).unwrap();
            for q in &p {
                for m in 0..stack.num_interfaces() {
                    let y = stack.interface_y(m);
                    let (a, b) = (q.start[1] - y, q.end[1] - y);
                    assert!(a * b >= -1e-24, "panel crosses interface {m}: {:?}", q);
                }
                assert!(q.length > 0.0);
            }
        }
    }
}

#[test]
fn closure_and_doubling() {
    let stack = ex1_stack();
    let s = star([2.0, -3.0], 2.0, 0.5, 1.0, std::f64::consts::FRAC_PI_4);
    let mut prev = 0usize;
    for n in [64, 128, 256, 512] {
        let p = panelize(&s, n, &stack, 0).unwrap();
        let sx: f64 = p.iter().map(|q| q.tangent[0] * q.length).sum();
        let sy: f64 = p.iter().map(|q| q.tangent[1] * q.length).sum();
        assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
        // crossings of y=-2, -3, -4 (six points) may shift the count slightly
        assert!((p.len() as i64 - n as i64).abs() <= 6, "{} vs {n}", p.len());
        if prev > 0 {
            assert!((p.len() as i64 - 2 * prev as i64).abs() <= 6);
        }
        prev = p.len();
        let lens: Vec<f64> = p.iter().map(|q| q.length).collect();
        let h = s.perimeter() / n as f64;
        assert!(lens.iter().all(|&l| l < 1.6 * h && l > 1e-3 * h));
    }
}

#[test]
fn mesh_is_layer_major() {
    let stack = ex1_stack();
    let curves = vec![
        star([0.0, -1.0], 2.0, 0.5, 1.0, std::f64::consts::FRAC_PI_4),
        star([2.0, -3.0], 2.0, 0.5, 1.0, std::f64::consts::FRAC_PI_4),
    ];
    let mesh = PanelMesh::new(curves, &[100, 100], &stack).unwrap();
    assert_eq!(mesh.layer_ranges.len(), 5);
    for (l, r) in mesh.layer_ranges.iter().enumerate() {
        for p in &mesh.panels[r.clone()] {
            assert_eq!(p.layer, l);
            assert_eq!(stack.layer_of(p.center[1]), l);
        }
    }
    assert_eq!(mesh.layer_ranges.last().unwrap().end, mesh.len());
    assert!(mesh.inside([0.0, -1.0]) && mesh.inside([2.0, -3.0]));
    assert!(!mesh.inside([5.0, 5.0]));
}

#[test]
fn invalid_inputs() {
    assert!(matches!(make_star([0.0; 2], 1.0, 1.0, 3.0, 0.0), Err(GeometryError::InvalidRadius { .. })));
    let c = star([0.0, 0.0], 1.0, 0.0, 1.0, 0.0);
    assert!(matches!(panelize(&c, 8, &far_stack(), 0), Err(GeometryError::TooFewPanels(8))));
    let sq = make_polygon(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
    let st = LayerStack::new(vec![0.0], vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
    assert!(matches!(panelize(&sq, 16, &st, 0), Err(GeometryError::TangentToInterface { interface: 0 })));
}
