mod support;

use support::*;

#[test]
fn finite_differences_on_random_models() {
    let mut failures = Vec::new();
    for (i, pm) in random_models(20).iter().enumerate() {
        for o in fd_check(pm).unwrap() {
            if o.ratio > 1.0 {
                failures.push(format!("model {i} {}: |err| {:.2e} at |d| {:.2e}", o.name, o.abs_error, o.analytic));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn mass_is_conserved() {
    for (i, pm) in random_models(20).iter().enumerate() {
        let c = conservation(pm).unwrap();
        assert!(c.mass <= 1e-8, "model {i}: {c:?}");
        assert!(c.dmass <= 1e-7, "model {i}: {c:?}");
        assert!(c.occupancy <= 1e-8, "model {i}: {c:?}");
    }
}

#[test]
fn differentiated_riccati_residual() {
    for (i, pm) in random_models(20).iter().enumerate() {
        let r = riccati_residual(pm).unwrap();
        assert!(r <= 1e-10, "model {i}: {r:e}");
    }
}

#[test]
fn suite_covers_the_shapes() {
    let models = random_models(20);
    assert!(models.iter().all(|pm| pm.model().phase_count() <= 8 && pm.params() <= 4));
    assert!(models.iter().any(|pm| pm.model().phase_count() == 8));
    assert!(models.iter().any(|pm| !pm.partition().zero.is_empty()));
    assert!(models.iter().all(|pm| pm.model().drift().unwrap() <= -0.05));
}
