use ockelm_demo::{gram, Alignment, Detector};

#[test]
fn alignment_matrix_has_band() {
    let x = [0.0, 1.0, 2.0, 1.0];
    let y = [0.0, 1.0, 2.0];
    let a = Alignment::new(&x, &y, 1.0, 2.0).unwrap();
    assert_eq!((a.rows(), a.cols()), (4, 3));
    let local = a.local();
    assert_eq!(local.len(), 12);
    // |i - j| >= T is outside the band
    assert_eq!(local[2], 0.0);
    assert!(local[0] > 0.99);
    assert!(a.normalized() > 0.0 && a.normalized() <= 1.0);
    assert!(Alignment::new(&x, &y, 1.0, 0.0).is_err());
    assert!(Alignment::new(&[], &y, 1.0, 2.0).is_err());
}

#[test]
fn identical_sequences_normalise_to_one() {
    let x = [0.3, -1.0, 2.0];
    let a = Alignment::new(&x, &x, 0.5, 3.0).unwrap();
    assert!((a.normalized() - 1.0).abs() < 1e-12);
}

#[test]
fn gram_is_symmetric_with_unit_diagonal() {
    let values = [0.0, 1.0, 2.0, 2.0, 1.0, 0.0, 0.5, 0.5, 0.5];
    let g = gram(&values, 3, 1.0, 2.0).unwrap();
    assert_eq!(g.len(), 9);
    for i in 0..3 {
        assert!((g[i * 3 + i] - 1.0).abs() < 1e-12);
        for j in 0..3 {
            assert_eq!(g[i * 3 + j], g[j * 3 + i]);
        }
    }
    assert!(gram(&values, 4, 1.0, 2.0).is_err());
}

#[test]
fn detector_surface_grows_away_from_data() {
    let points: Vec<f64> = (0..40)
        .flat_map(|i| {
            let a = i as f64 * 0.7;
            [a.cos() * 0.5, a.sin() * 0.5]
        })
        .collect();
    let d = Detector::new(&points, 0.5, 0.0, 100.0, 0.05).unwrap();
    let s = d.surface(-3.0, 3.0, -3.0, 3.0, 30, 20);
    assert_eq!(s.len(), 600);
    let centre = s[10 * 30 + 15];
    let corner = s[0];
    assert!(corner > d.delta() && centre < corner, "{centre} {corner} {}", d.delta());
    let flagged: u32 = d.flagged().iter().map(|&f| u32::from(f)).sum();
    assert!((1..=2).contains(&flagged));
    assert!(Detector::new(&points[..3], 0.5, 0.0, 100.0, 0.05).is_err());
}
