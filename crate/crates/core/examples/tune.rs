// scratch: pipeline tuning probe for the lambda comparison
use std::time::Instant;
use ticketlab_core::models::AutoencoderConfig;
use ticketlab_core::pipeline::{
    run_pipeline, Method, PipelineConfig, PipelineDatasetConfig, StageConfig, TransferConfig,
};

fn acceptance_cfg(lambda: f64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        model: AutoencoderConfig { classes: 2, ..Default::default() },
        dataset: PipelineDatasetConfig {
            train_count: 500,
            test_count: 150,
            ..Default::default()
        },
        pretrain: StageConfig { epochs: 6, lr: 0.02, momentum: 0.9, batch_size: 32 },
        rounds: 7,
        round_finetune: StageConfig { epochs: 2, lr: 0.01, momentum: 0.9, batch_size: 32 },
        transfer: TransferConfig {
            stage: StageConfig { epochs: 3, lr: 0.02, momentum: 0.9, batch_size: 32 },
            rounds: Some(vec![7]),
            freeze_encoder: false,
        },
        method: Method::ModifiedLth,
        ..Default::default()
    };
    cfg.loss.lambda = lambda;
    cfg
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    for lambda in [10.0, 0.0] {
        for seed in 0..seeds {
            let t0 = Instant::now();
            let out = run_pipeline(&acceptance_cfg(lambda), 100 + seed).unwrap();
            let r7 = out.rows.last().unwrap();
            println!(
                "lambda {lambda} seed {seed}: pretrain acc {:.3} dec loss {:.2} | r7 sparsity {:.4} dist_ticket {:.4} dist_fin {:.4} up_acc {:.3} down_class {:.3} down_pixel {:.3} | {:.0}s",
                out.pretrain_test_acc,
                out.decoder_loss_curve.last().unwrap(),
                r7.sparsity,
                r7.featmap_dist_ticket,
                r7.featmap_dist_finetuned,
                r7.upstream_class_acc,
                r7.down_class_acc.unwrap(),
                r7.down_pixel_acc.unwrap(),
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
