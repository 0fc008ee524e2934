use cade::attacks::pgd;
use cade::datasets::gen_syn_measurement;
use cade::models::{train, AdversarialConfig, Arch, Model, Target, TrainConfig};

fn rmse(model: &Model, rows: &[(Vec<f64>, f64)]) -> f64 {
    let se: f64 = rows.iter().map(|(x, y)| (model.predict_value(x) - y).powi(2)).sum();
    (se / rows.len() as f64).sqrt()
}

#[test]
fn pgd_training_trades_clean_error_for_robustness() {
    let data = gen_syn_measurement(3000, 1).unwrap();
    let test = gen_syn_measurement(400, 2).unwrap();
    let eps = 0.1;
    let plain_cfg = TrainConfig {
        epochs: 30,
        batch_size: 64,
        learning_rate: 0.01,
        seed: 3,
        ..TrainConfig::default()
    };
    let robust_cfg = TrainConfig {
        adversarial: Some(AdversarialConfig { epsilon: eps, steps: 10, step_size: eps / 4.0 }),
        ..plain_cfg.clone()
    };
    let plain = train(&Arch::Linear, &data, &plain_cfg).unwrap().model;
    let robust = train(&Arch::Linear, &data, &robust_cfg).unwrap().model;

    let clean: Vec<(Vec<f64>, f64)> =
        (0..test.n()).map(|i| (test.features.row(i).to_vec(), test.target[i])).collect();
    let attacked = |m: &Model| -> Vec<(Vec<f64>, f64)> {
        clean
            .iter()
            .map(|(x, y)| (pgd(m, x, Target::Real(*y), eps, eps / 4.0, 20).unwrap(), *y))
            .collect()
    };
    let (pc, rc) = (rmse(&plain, &clean), rmse(&robust, &clean));
    let (pa, ra) = (rmse(&plain, &attacked(&plain)), rmse(&robust, &attacked(&robust)));
    assert!(rc > pc, "clean rmse: plain {pc}, robust {rc}");
    assert!(ra < pa, "pgd rmse: plain {pa}, robust {ra}");
}
