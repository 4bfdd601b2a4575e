//! Fit a Gaussian mixture with exact and kd-tree EM, then rank outliers.

use skyvault::skygen::SurveyRng;
use skyvault::stats::{em_fit, model_deviation, outlier_scores, EmConfig, EmMode};

fn main() -> skyvault::Result<()> {
    let mut rng = SurveyRng::new(2, 0);
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (cx, cy) in [(0.0, 0.0), (8.0, 1.0), (2.0, 9.0)] {
        for _ in 0..1000 {
            points.push(vec![cx + rng.normal(), cy + rng.normal()]);
        }
    }
    points.push(vec![20.0, -20.0]);

    let config = EmConfig { k: 3, seed: 1, ..Default::default() };
    let (exact, es) = em_fit(&points, &config)?;
    let (kd, ks) = em_fit(&points, &EmConfig { mode: EmMode::Kd, ..config })?;
    println!("exact: {} iterations, {} evaluations", es.iterations, es.evaluations);
    println!("kd:    {} iterations, {} evaluations, {} nodes pruned", ks.iterations, ks.evaluations, ks.nodes_pruned);
    println!("deviation between fits {:.2e}", model_deviation(&kd, &exact)?);
    for (w, m) in exact.weights.iter().zip(&exact.means) {
        println!("weight {w:.3} mean ({:.2}, {:.2})", m[0], m[1]);
    }

    let scores = outlier_scores(&exact, &points)?;
    let worst = (0..points.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap_or(0);
    println!("most anomalous point: {:?} (score {:.1})", points[worst], scores[worst]);
    Ok(())
}
