use levi_eit::verify::{drm_oracle_error, oracle_suite, rim_oracle_error};

#[test]
fn drm_matches_brute_force_volume_quadrature_on_heart() {
    let rel = drm_oracle_error();
    println!("worst relative DRM deviation {rel:.2e}");
    assert!(rel <= 1e-4);
}

#[test]
fn rim_matches_brute_force_on_unit_disk() {
    let rel = rim_oracle_error();
    println!("worst relative RIM deviation {rel:.2e}");
    assert!(rel <= 1e-3);
}

#[test]
fn gauss_identities_and_area() {
    for c in oracle_suite().iter().skip(2) {
        assert!(c.pass, "{}", c.line());
    }
}
