use braid_wasm::demo;

#[test]
fn render_fills_the_canvas() {
    let px = demo::render(20.0, 10.0, 1.0, 7.0, 64, 128, 1).unwrap();
    assert_eq!(px.len(), 64 * 128 * 4);
    assert!(px.chunks(4).all(|c| c[3] == 255));
    assert!(px.chunks(4).any(|c| c[0] > 200 && c[1] > 200));
    assert!(demo::render(20.0, 10.0, 1.0, -1.0, 64, 128, 1).is_err());
}

#[test]
fn short_fit_reports_losses() {
    let out = demo::short_fit(23.0, 12.0, 8, 0).unwrap();
    assert_eq!(out.len(), 2 + 8);
    assert!(out[2..].iter().all(|v| v.is_finite()));
}

#[test]
fn order_comparison_returns_three_amplitudes() {
    let v = demo::order_comparison(40.0, 2, 5).unwrap();
    assert_eq!(v.len(), 3);
    assert!((v[0] - 20.0).abs() < 1e-9);
    assert!(v[1] < v[0] && v[2] < v[0]);
    assert!(demo::order_comparison(0.0, 2, 5).is_err());
}
