use invisible_eit_web::ops::{construct, dual_basis_raster, potential_raster, Request};

const REQUEST: &str = r#"{"degrees": [1, 91, 181, 271], "omega": {"shape": "concentric_disk", "radius": 0.5},
    "target_h": 0.15, "size": 17, "epsilon": 1.0}"#;

#[test]
fn rasters_are_square_and_blank_outside_the_disk() {
    let r = potential_raster(&[1.0, 91.0, 181.0, 271.0], 1, false, 17).unwrap();
    assert_eq!(r.values.len(), 17 * 17);
    assert!(r.values[0].is_nan() && r.values[16].is_nan());
    assert!(r.values[8 * 17 + 8].is_finite());
    let d = dual_basis_raster(&Request::parse(REQUEST).unwrap()).unwrap();
    assert_eq!(d.size, 17);
}

#[test]
fn construction_reports_a_cancelled_measurement() {
    let out = construct(&Request::parse(REQUEST).unwrap()).unwrap();
    assert!(out.converged && out.backoffs.is_empty());
    assert!(out.measurement_max <= 1e-3 * out.unbalanced_max);
    assert!(out.history.last().unwrap().discrepancy < 1e-8);
}
