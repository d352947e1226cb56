use dsvb::data::{synth_generate, ActuationPattern, ContactMode, SynthConfig};

const WINDOW: usize = 100;

fn features(mode: ContactMode, seed: u64) -> Vec<Vec<f64>> {
    let cfg = SynthConfig {
        contact_mode: mode,
        actuation: ActuationPattern::Oscillatory,
        samples: 4000,
        seed,
        ..SynthConfig::default()
    };
    let s = synth_generate(&cfg).unwrap().states.unwrap();
    let mut out = Vec::new();
    let mut start = 0;
    while start + WINDOW <= s.rows() {
        let mut f = Vec::new();
        for c in 0..s.cols() {
            let col: Vec<f64> = (start..start + WINDOW).map(|r| s.get(r, c)).collect();
            let mean = col.iter().sum::<f64>() / WINDOW as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / WINDOW as f64;
            f.push(mean);
            f.push(var.sqrt());
        }
        out.push(f);
        start += WINDOW / 2;
    }
    out
}

fn labelled(seed: u64) -> Vec<(Vec<f64>, f64)> {
    let mut v: Vec<_> = features(ContactMode::Tip, seed).into_iter().map(|f| (f, 0.0)).collect();
    v.extend(features(ContactMode::Surface, seed + 1).into_iter().map(|f| (f, 1.0)));
    v
}

#[test]
fn window_classifier_separates_contact_modes() {
    let train = labelled(0);
    let test = labelled(10);
    let d = train[0].0.len();
    let mean: Vec<f64> = (0..d).map(|j| train.iter().map(|(x, _)| x[j]).sum::<f64>() / train.len() as f64).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let v = train.iter().map(|(x, _)| (x[j] - mean[j]).powi(2)).sum::<f64>() / train.len() as f64;
            v.sqrt().max(1e-9)
        })
        .collect();
    let z = |x: &[f64]| -> Vec<f64> { (0..d).map(|j| (x[j] - mean[j]) / scale[j]).collect() };
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..500 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, y) in &train {
            let x = z(x);
            let p = 1.0 / (1.0 + (-(b + w.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>())).exp());
            for j in 0..d {
                gw[j] += (p - y) * x[j];
            }
            gb += p - y;
        }
        let n = train.len() as f64;
        for j in 0..d {
            w[j] -= 0.5 * (gw[j] / n + 1e-3 * w[j]);
        }
        b -= 0.5 * gb / n;
    }
    let correct = test
        .iter()
        .filter(|(x, y)| {
            let x = z(x);
            let logit = b + w.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>();
            (logit > 0.0) == (*y > 0.5)
        })
        .count();
    let acc = correct as f64 / test.len() as f64;
    assert!(acc > 0.8, "accuracy {acc:.3}");
}
