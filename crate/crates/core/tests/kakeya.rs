use dirsq::kakeya::{conical_lower_bound, meyer_lower_bound, perron_family, rdf_lower_bound, Averaging, Sampler};

/// Growing the sampled square at fixed cell size. The averages have compact
/// support, so RdF settles once the window holds them; the Hilbert tails decay
/// like 1/d and are measured at q = 4/3, so the Meyer ratio keeps creeping up
/// with a shrinking increment.
#[test]
fn domain_size_sensitivity() {
    let fam = perron_family(8).unwrap();
    let samplers: Vec<Sampler> = [(256usize, 8.0), (512, 16.0), (1024, 32.0)].iter().map(|&(n, l)| Sampler::for_family(&fam, n, l).unwrap()).collect();
    let m: Vec<f64> = samplers.iter().map(|s| meyer_lower_bound(&fam, 4.0, s).unwrap().ratio).collect();
    assert!(m[0] < m[1] && m[1] < m[2], "{m:?}");
    assert!(m[2] - m[1] < m[1] - m[0], "{m:?}");
    assert!(m[2] / m[0] < 1.25, "{m:?}");
    let r: Vec<f64> = samplers.iter().map(|s| rdf_lower_bound(&fam, 4.0, s, Averaging::Rough).unwrap().ratio).collect();
    assert!((r[1] - r[0]).abs() <= 1e-2 * r[0], "{r:?}");
    assert!((r[2] - r[1]).abs() <= 1e-12 * r[1], "{r:?}");
}

#[test]
fn union_area_shrinks_like_inverse_log() {
    let scaled: Vec<f64> = [4usize, 16, 64, 256].iter().map(|&n| perron_family(n).unwrap().union_area * (n as f64).log2()).collect();
    let hi = scaled.iter().copied().fold(f64::MIN, f64::max);
    let lo = scaled.iter().copied().fold(f64::MAX, f64::min);
    assert!(hi / lo <= 4.0, "{scaled:?}");
}

/// Sensitivity of the smoothed conical harness to the smoothing width δ.
#[test]
fn conical_smoothing_sweep() {
    let fam = perron_family(16).unwrap();
    let s = Sampler::for_family(&fam, 512, 8.0).unwrap();
    let rough = conical_lower_bound(&fam, 4.0, &s, None).unwrap().ratio;
    let smooth: Vec<f64> = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0].iter().map(|&d| conical_lower_bound(&fam, 4.0, &s, Some(d)).unwrap().ratio).collect();
    // Wider smoothing moves further from the sharp cone, monotonically.
    assert!(smooth.windows(2).all(|w| w[1] < w[0]), "{smooth:?}");
    assert!(smooth.iter().all(|&r| r < rough && r > 0.85 * rough), "{rough} {smooth:?}");
}
