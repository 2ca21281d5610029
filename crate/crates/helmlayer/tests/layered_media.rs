use helmlayer::layered_media::*;
use helmlayer::Complex64;
use rand::{Rng, SeedableRng};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn stacks() -> Vec<LayerStack> {
    vec![
        LayerStack::new(vec![0.0, 1.0, 2.0, 3.0], vec![3.2, 2.5, 5.1, 8.6, 6.9], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
        LayerStack::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![1.2, 2.3, 4.5, 6.1, 7.7, 10.0],
            vec![1.1, 2.3, 3.4, 4.6, 5.0, 6.6],
        )
        .unwrap(),
        LayerStack::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![2.0, 3.0, 6.0, 5.0, 8.0, 10.0],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap(),
    ]
}

#[test]
fn vertical_wavenumber_branch() {
    assert_eq!(vertical_wavenumber(c(0.0), 3.0), c(3.0));
    assert!(vertical_wavenumber(c(3.0), 3.0).norm() < 1e-15);
    let v = vertical_wavenumber(c(5.0), 3.0);
    assert!((v - Complex64::new(0.0, 4.0)).norm() < 1e-14);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let l = Complex64::new(rng.gen_range(-20.0..20.0), rng.gen_range(-1.0..1.0));
        let k = rng.gen_range(0.5..10.0);
        let v = vertical_wavenumber(l, k);
        assert!(v.im >= 0.0);
        assert!((v * v + l * l - k * k).norm() < 1e-12 * (k * k + l.norm_sqr()));
    }
}

#[test]
fn fresnel_examples_and_identities() {
    let s = LayerStack::new(vec![0.0], vec![2.0, 2.0], vec![1.0, 2.0]).unwrap();
    let f = fresnel(&s, 0, c(0.0)).unwrap();
    assert!((f.r_down - c(-1.0 / 3.0)).norm() < 1e-15);
    assert!((f.t_down - c(2.0 / 3.0)).norm() < 1e-15);
    let s = LayerStack::new(vec![0.0], vec![1.2, 2.3], vec![1.1, 2.3]).unwrap();
    let f = fresnel(&s, 0, c(1.3)).unwrap();
    assert!((c(1.0) + f.r_down - f.t_down).norm() < 1e-14);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for s in stacks() {
        for m in 0..s.num_interfaces() {
            for _ in 0..100 {
                let l = Complex64::new(rng.gen_range(-15.0..15.0), rng.gen_range(-0.5..0.5));
                let f = fresnel(&s, m, l).unwrap();
                assert!((c(1.0) + f.r_down - f.t_down).norm() < 1e-13);
                assert_eq!(f.r_up, -f.r_down);
                assert!((c(1.0) + f.r_up - f.t_up).norm() < 1e-13);
            }
        }
    }
}

#[test]
fn two_layer_generalized_coefficients() {
    let s = LayerStack::new(vec![0.0], vec![2.0, 2.0], vec![1.0, 2.0]).unwrap();
    for l in [0.0, 0.7, 1.9, 3.5] {
        let co = Coefficients::new(&s, c(l)).unwrap();
        let f = fresnel(&s, 0, c(l)).unwrap();
        assert!((co.refl_below[0] - f.r_down).norm() < 1e-15);
        assert_eq!(co.transmission(0, 0), c(1.0));
    }
    let co = Coefficients::new(&s, c(0.0)).unwrap();
    assert!((co.transmission(0, 1) - c(2.0 / 3.0)).norm() < 1e-15);
    let id = ComponentId::new(0, 0, Dir::Up, Dir::Down);
    assert!((density(&co, id) - co.refl_below[0]).norm() < 1e-15);
}

#[test]
fn matched_stack_is_reflectionless() {
    let s = LayerStack::new(vec![0.0, 1.0, 2.5], vec![3.0; 4], vec![1.5; 4]).unwrap();
    for l in [0.0, 1.0, 2.9, 7.0] {
        let co = Coefficients::new(&s, Complex64::new(l, -0.1)).unwrap();
        for v in co.refl_below.iter().chain(co.refl_above.iter()) {
            assert_eq!(v.norm(), 0.0);
        }
        for a in 0..4 {
            for b in 0..4 {
                assert!((co.transmission(a, b) - c(1.0)).norm() < 1e-14);
            }
        }
        for id in ComponentId::all_nonzero(4) {
            // only the direct cross-layer wave survives
            let direct = (id.target < id.source && id.arrival == Dir::Up && id.departure == Dir::Up)
                || (id.target > id.source && id.arrival == Dir::Down && id.departure == Dir::Down);
            let d = density(&co, id);
            if direct {
                assert!((d - c(1.0)).norm() < 1e-14, "{id:?}");
            } else {
                assert_eq!(d.norm(), 0.0, "{id:?}");
            }
        }
    }
    let pw = PlaneWaveField::from_angle(&s, 0.3).unwrap();
    assert_eq!(pw.background(0.2, 0.5).norm(), 0.0);
    let exact = Complex64::new(0.0, pw.kx * 0.4 - pw.ky * -3.0).exp();
    assert!((pw.background(0.4, -3.0) - exact).norm() < 1e-14);
}

#[test]
fn deep_evanescent_reflection_reduces_to_fresnel() {
    let s = LayerStack::new(vec![0.0, 0.5], vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 1.5]).unwrap();
    let l = c(150.0);
    let co = Coefficients::new(&s, l).unwrap();
    let f = fresnel(&s, 0, l).unwrap();
    assert!((co.refl_below[0] - f.r_down).norm() < 1e-8);
}

#[test]
fn component_count_is_4l2() {
    for layers in 2..8 {
        let l = layers - 1;
        assert_eq!(ComponentId::all_nonzero(layers).len(), 4 * l * l);
    }
    for src in 0..5 {
        assert!(ComponentId::new(0, src, Dir::Down, Dir::Down).is_structural_zero(5));
        assert!(ComponentId::new(0, src, Dir::Down, Dir::Up).is_structural_zero(5));
    }
}

#[test]
fn incident_field_examples() {
    let s = &stacks()[1];
    let a = 3.0 * 2f64.sqrt() / 5.0;
    let pw = PlaneWaveField::new(s, -a, a).unwrap();
    assert!((pw.incident(0.0, 1.0) - Complex64::new(0.0, -a).exp()).norm() < 1e-15);
    assert!((pw.incident(0.0, 0.5).norm() - 1.0).abs() < 1e-15);
    assert_eq!(pw.incident(0.0, -0.5), c(0.0));
}

#[test]
fn background_field_satisfies_transmission_conditions() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let a = 3.0 * 2f64.sqrt() / 5.0;
    let fields = {
        let s = stacks();
        vec![
            (s[0].clone(), PlaneWaveField::from_angle(&s[0], 0.4).unwrap()),
            (s[1].clone(), PlaneWaveField::new(&s[1], -a, a).unwrap()),
            (s[2].clone(), PlaneWaveField::new(&s[2], 0.0, 2.0).unwrap()),
        ]
    };
    for (s, pw) in &fields {
        for m in 0..s.num_interfaces() {
            let y = s.interface_y(m);
            for _ in 0..20 {
                let x = rng.gen_range(-3.0..3.0);
                let (yp, ym) = (y + 1e-13, y - 1e-13);
                let up = pw.total(x, yp);
                let dn = pw.total(x, ym);
                let fp = (pw.background_dy(x, yp) + pw.incident_dy(x, yp)) * s.eta(m);
                let fm = (pw.background_dy(x, ym) + pw.incident_dy(x, ym)) * s.eta(m + 1);
                let scale = up.norm().max(1.0);
                assert!((up - dn).norm() < 1e-10 * scale, "jump at m={m}");
                assert!((fp - fm).norm() < 1e-10 * fp.norm().max(1.0), "flux at m={m}");
            }
        }
    }
}
