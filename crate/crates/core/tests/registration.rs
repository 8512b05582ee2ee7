use warpreg::basis::{fit_expansion, SampledCurve};
use warpreg::registration::estimate_amplitude;
use warpreg::simulate::gaussian_mixture;
use warpreg::{
    generate, register_pair, register_set, select_reference_j, DatasetConfig, MonotoneWarp,
    RegistrationConfig, TrueWarp, WarpFamily,
};

fn mixture(t: f64) -> f64 {
    gaussian_mixture(&[5.0, 4.0], &[0.25, 0.75], &[0.1, 0.1], t).unwrap()
}

fn trapezoid(grid: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    grid.windows(2)
        .enumerate()
        .map(|(k, w)| 0.5 * (w[1] - w[0]) * (f(k) + f(k + 1)))
        .sum()
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-12 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn amplitude_matches_scalar_minimization() {
    let cfg = RegistrationConfig::default();
    let x = SampledCurve::from_fn(1000, mixture).unwrap();
    let x_exp = fit_expansion(&x, &cfg.basis).unwrap();
    let coeffs = [0.4, -0.2, 0.1, 0.3, -0.5, 0.2, 0.0, -0.1, 0.3, 0.1];
    let w = MonotoneWarp::from_coeffs(&coeffs, &cfg.warp_basis, 1001).unwrap();
    // a large misfit would flatten the loss below what golden section resolves
    let y = SampledCurve::from_fn(1000, |t| 2.5 * mixture(t.powf(1.3)) + 0.02 * (7.0 * t).sin()).unwrap();
    let model: Vec<f64> = y.grid().iter().map(|&t| x_exp.eval(w.eval(t).unwrap()).unwrap()).collect();
    let loss = |a: f64| trapezoid(y.grid(), |k| (y.values()[k] - a * model[k]).powi(2));
    let want = golden_min(loss, -10.0, 10.0);
    let got = estimate_amplitude(&y, &x_exp, &w).unwrap();
    assert!((got - want).abs() <= 1e-8, "{got} vs {want}");
}

#[test]
fn set_matches_pairwise() {
    let cfg = RegistrationConfig::default();
    let ds = generate(&DatasetConfig {
        n_curves: 6,
        ..DatasetConfig::preset(WarpFamily::F2, 2, 4)
    })
    .unwrap();
    let set = register_set(&ds.curves, 2, &cfg).unwrap();
    for (y, r) in ds.curves.iter().zip(&set) {
        let r = r.as_ref().unwrap();
        let p = register_pair(&ds.curves[2], y, &cfg).unwrap();
        assert_eq!(r.warp.coeffs(), p.warp.coeffs());
        assert_eq!(r.amplitude, p.amplitude);
        assert_eq!(r.prd, p.prd);
    }
}

#[test]
fn identical_curves_register_to_identity() {
    let cfg = RegistrationConfig::default();
    let x = SampledCurve::from_fn(1000, mixture).unwrap();
    let curves = vec![x; 21];
    for r in register_set(&curves, 7, &cfg).unwrap() {
        let r = r.unwrap();
        for k in 0..=200 {
            let t = k as f64 / 200.0;
            assert!((r.warp.eval(t).unwrap() - t).abs() <= 1e-3);
        }
        assert!(r.prd <= 0.1);
        assert!((r.amplitude - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn warped_copy_is_recovered() {
    let cfg = RegistrationConfig::default();
    let x = SampledCurve::from_fn(1000, mixture).unwrap();
    let h = TrueWarp::F1 { b: 0.5 };
    let y = SampledCurve::from_fn(1000, |t| mixture(h.eval(t))).unwrap();
    let r = register_pair(&x, &y, &cfg).unwrap();
    let worst = (0..=500)
        .map(|k| k as f64 / 500.0)
        .map(|t| (r.warp.eval(h.inverse(t)).unwrap() - t).abs())
        .fold(0.0, f64::max);
    // y = x∘h, so ĥ should reproduce h
    assert!(worst <= 0.02, "sup error {worst}");
}

#[test]
fn j_criterion_prefers_a_central_curve() {
    let cfg = RegistrationConfig::default();
    let ds = generate(&DatasetConfig::preset(WarpFamily::F1, 1, 0)).unwrap();
    let choice = select_reference_j(&ds.curves, &cfg).unwrap();
    let TrueWarp::F1 { b } = ds.true_warps[choice.index] else {
        panic!("F1 dataset")
    };
    assert!(b.abs() <= 1.0 / 3.0 + 1e-12, "picked b = {b}");
}
