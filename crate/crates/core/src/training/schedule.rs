use super::config::TrainConfig;

/// Learning rate at optimizer step `step` (0-based).
///
/// Linear warmup from `warmup_start_lr` to `base_lr` over the warmup epochs,
/// then a half cosine from `base_lr` down to `final_lr`, reached at step
/// `total_epochs · steps_per_epoch`. Steps past the end get 0.
pub fn lr_at(step: usize, steps_per_epoch: usize, config: &TrainConfig) -> f64 {
    let total = config.total_epochs * steps_per_epoch;
    let warmup = config.warmup_epochs * steps_per_epoch;
    if total == 0 || step > total {
        return 0.0;
    }
    if step < warmup {
        let frac = step as f64 / warmup as f64;
        return config.warmup_start_lr + (config.base_lr - config.warmup_start_lr) * frac;
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    config.final_lr + (config.base_lr - config.final_lr) * cosine
}
