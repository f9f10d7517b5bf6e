use gazemtl::data::{generate_synthetic, Dataset, SynthConfig};
use gazemtl::plot::{scatter_csv, scatter_rows, scatter_svg, GazePredictor, PRED_GLYPH, SCATTER_HEADER, TRUE_GLYPH};
use gazemtl::{Result, Tensor};

/// Looks the window up in the dataset and returns its own label.
struct Oracle<'a>(&'a Dataset);

impl GazePredictor for Oracle<'_> {
    fn predict_gaze(&self, eeg: &Tensor<f32>) -> Result<[f64; 2]> {
        Ok(self.0.samples.iter().find(|s| &s.eeg == eeg).expect("window from the dataset").gaze_f64())
    }
}

fn glyphs(svg: &str, class: &str) -> usize {
    let doc = roxmltree::Document::parse(svg).unwrap();
    doc.descendants().filter(|n| n.attribute("class") == Some(class)).count()
}

#[test]
fn oracle_predictor_puts_every_point_on_the_diagonal() {
    let ds = generate_synthetic(25, &SynthConfig::default(), 8).unwrap();
    let rows = scatter_rows(&Oracle(&ds), &ds).unwrap();
    assert_eq!(rows.len(), 25);
    let csv = scatter_csv(&rows);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(SCATTER_HEADER));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!((v[0], v[1]), (v[2], v[3]));
    }
}

#[test]
fn svg_is_well_formed_with_one_glyph_pair_per_sample() {
    let ds = generate_synthetic(17, &SynthConfig::default(), 9).unwrap();
    let rows = scatter_rows(&Oracle(&ds), &ds).unwrap();
    let svg = scatter_svg(&rows, "a <title> & more").unwrap();
    assert_eq!(glyphs(&svg, TRUE_GLYPH), 17);
    assert_eq!(glyphs(&svg, PRED_GLYPH), 17);
    assert!(scatter_svg(&[], "empty").is_err());
}
