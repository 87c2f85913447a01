//! Adaptive density control: clone small under-reconstructed splats, split
//! large ones, prune near-transparent ones, and periodically clamp opacities.

use rand_chacha::ChaCha8Rng;

use crate::scene::{logit, GaussianCloud, GaussianSplat};

use super::adam::CloudOptimizer;

/// Thresholds governing one density-control pass.
#[derive(Debug, Clone)]
pub struct DensifyConfig {
    /// Average screen-space positional gradient norm above which a splat is
    /// densified.
    pub grad_threshold: f64,
    /// Fraction of scene extent separating "small" (clone) from "large"
    /// (split) splats.
    pub scale_threshold_frac: f64,
    /// Activated opacity below which a splat is pruned.
    pub prune_opacity: f64,
    /// Scale divisor applied to both children of a split.
    pub split_scale_shrink: f64,
    /// Hard cap on cloud size; densification is skipped beyond it.
    pub max_splats: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            grad_threshold: 2e-4,
            scale_threshold_frac: 0.01,
            prune_opacity: 0.005,
            split_scale_shrink: 1.6,
            max_splats: 200_000,
        }
    }
}

/// Screen-gradient statistics accumulated between density-control passes.
#[derive(Debug, Clone, Default)]
pub struct DensifyAccumulator {
    grad_sum: Vec<f64>,
    count: Vec<u32>,
}

impl DensifyAccumulator {
    pub fn new(n: usize) -> Self {
        Self { grad_sum: vec![0.0; n], count: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.grad_sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad_sum.is_empty()
    }

    /// Record one iteration's per-splat screen-gradient norms; splats that
    /// did not touch any pixel contribute nothing.
    pub fn add(&mut self, grad2d_norm: &[f64]) {
        assert_eq!(grad2d_norm.len(), self.grad_sum.len());
        for (i, &g) in grad2d_norm.iter().enumerate() {
            if g > 0.0 {
                self.grad_sum[i] += g;
                self.count[i] += 1;
            }
        }
    }

    /// Mean norm over the iterations where the splat was visible.
    pub fn average(&self) -> Vec<f64> {
        self.grad_sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect()
    }

    pub fn reset(&mut self, n: usize) {
        self.grad_sum.clear();
        self.grad_sum.resize(n, 0.0);
        self.count.clear();
        self.count.resize(n, 0);
    }
}

/// Summary of one density-control pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AdcOutcome {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// One clone/split/prune pass over the cloud. `avg_grad2d` must hold the
/// per-splat average screen-gradient norms for the elapsed window; the
/// optimizer's moment buffers are kept aligned with the surviving splats.
pub fn adaptive_density_control(
    cloud: &mut GaussianCloud,
    avg_grad2d: &[f64],
    extent: f64,
    cfg: &DensifyConfig,
    optimizer: &mut CloudOptimizer,
    rng: &mut ChaCha8Rng,
) -> AdcOutcome {
    assert_eq!(avg_grad2d.len(), cloud.len());
    let mut outcome = AdcOutcome::default();
    let scale_limit = cfg.scale_threshold_frac * extent;
    let room = cloud.len() < cfg.max_splats;

    let mut keep = vec![true; cloud.len()];
    let mut fresh: Vec<GaussianSplat> = Vec::new();
    if room {
        for i in 0..cloud.len() {
            if avg_grad2d[i] <= cfg.grad_threshold {
                continue;
            }
            let splat = cloud.splats()[i].clone();
            let max_scale = splat.scale().max();
            if max_scale <= scale_limit {
                fresh.push(splat);
                outcome.cloned += 1;
            } else {
                keep[i] = false;
                fresh.extend(split_splat(&splat, cfg.split_scale_shrink, rng));
                outcome.split += 1;
            }
        }
    }

    cloud.retain_mask(&keep);
    optimizer.retain(&keep);
    let appended = fresh.len();
    for splat in fresh {
        cloud
            .push(splat)
            .expect("densified splat inherits a valid basis count");
    }
    optimizer.append(appended);

    let prune: Vec<bool> = cloud
        .splats()
        .iter()
        .map(|s| s.opacity() >= cfg.prune_opacity)
        .collect();
    outcome.pruned = prune.iter().filter(|&&k| !k).count();
    cloud.retain_mask(&prune);
    optimizer.retain(&prune);

    outcome
}

/// Two children sampled from the parent's own density, with shrunken scales.
fn split_splat(parent: &GaussianSplat, shrink: f64, rng: &mut ChaCha8Rng) -> [GaussianSplat; 2] {
    let factor = parent.covariance_factor();
    let make = |rng: &mut ChaCha8Rng| {
        let xi = nalgebra::Vector3::new(
            standard_normal(rng),
            standard_normal(rng),
            standard_normal(rng),
        );
        let mut child = parent.clone();
        child.position = parent.position + factor * xi;
        child.log_scale = parent.log_scale.map(|l| l - shrink.ln());
        child
    };
    [make(rng), make(rng)]
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Clamp every opacity to at most `ceiling` (activated), zeroing the
/// optimizer's opacity momentum so splats can recover cleanly.
pub fn reset_opacity(cloud: &mut GaussianCloud, ceiling: f64, optimizer: &mut CloudOptimizer) {
    let lid = logit(ceiling);
    for splat in cloud.splats_mut() {
        if splat.logit_opacity > lid {
            splat.logit_opacity = lid;
        }
    }
    optimizer.reset_opacity_state();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::adam::LearningRates;
    use crate::rng::stream;
    use crate::synth::random_cloud;
    use approx::assert_abs_diff_eq;

    fn setup(n: usize) -> (GaussianCloud, CloudOptimizer) {
        let cloud = random_cloud(n, 0, 9);
        let opt = CloudOptimizer::new(&cloud, LearningRates::default(), 2.0);
        (cloud, opt)
    }

    #[test]
    fn small_high_gradient_splat_is_cloned() {
        let (mut cloud, mut opt) = setup(3);
        cloud.splats_mut()[1].log_scale.fill(-6.0);
        let mut avg = vec![0.0; 3];
        avg[1] = 1.0;
        let cfg = DensifyConfig::default();
        let mut rng = stream(0, "adc");
        let out =
            adaptive_density_control(&mut cloud, &avg, 2.0, &cfg, &mut opt, &mut rng);
        assert_eq!(out, AdcOutcome { cloned: 1, split: 0, pruned: 0 });
        assert_eq!(cloud.len(), 4);
        assert_eq!(opt.tracked_splats(), 4);
        let parent = cloud.splats()[1].clone();
        let child = cloud.splats()[3].clone();
        assert_eq!(parent.position, child.position);
        assert_eq!(parent.log_scale, child.log_scale);
    }

    #[test]
    fn large_high_gradient_splat_splits_into_two_smaller() {
        let (mut cloud, mut opt) = setup(2);
        cloud.splats_mut()[0].log_scale.fill(0.5);
        let avg = vec![1.0, 0.0];
        let cfg = DensifyConfig::default();
        let mut rng = stream(1, "adc");
        let before = cloud.splats()[0].clone();
        let out =
            adaptive_density_control(&mut cloud, &avg, 2.0, &cfg, &mut opt, &mut rng);
        assert_eq!(out, AdcOutcome { cloned: 0, split: 1, pruned: 0 });
        assert_eq!(cloud.len(), 3);
        assert_eq!(opt.tracked_splats(), 3);
        for child in &cloud.splats()[1..] {
            assert_abs_diff_eq!(
                child.log_scale.x,
                before.log_scale.x - 1.6f64.ln(),
                epsilon = 1e-12
            );
            assert!(child.position != before.position);
        }
    }

    #[test]
    fn transparent_splats_are_pruned() {
        let (mut cloud, mut opt) = setup(4);
        cloud.splats_mut()[2].logit_opacity = logit(0.001);
        let avg = vec![0.0; 4];
        let cfg = DensifyConfig::default();
        let mut rng = stream(2, "adc");
        let out =
            adaptive_density_control(&mut cloud, &avg, 2.0, &cfg, &mut opt, &mut rng);
        assert_eq!(out.pruned, 1);
        assert_eq!(cloud.len(), 3);
        assert_eq!(opt.tracked_splats(), 3);
    }

    #[test]
    fn cap_suppresses_densification_but_not_pruning() {
        let (mut cloud, mut opt) = setup(4);
        cloud.splats_mut()[0].logit_opacity = logit(0.001);
        let avg = vec![1.0; 4];
        let cfg = DensifyConfig { max_splats: 4, ..DensifyConfig::default() };
        let mut rng = stream(3, "adc");
        let out =
            adaptive_density_control(&mut cloud, &avg, 2.0, &cfg, &mut opt, &mut rng);
        assert_eq!(out.cloned + out.split, 0);
        assert_eq!(out.pruned, 1);
        assert_eq!(cloud.len(), 3);
    }

    #[test]
    fn opacity_reset_clamps_only_from_above() {
        let (mut cloud, mut opt) = setup(2);
        cloud.splats_mut()[0].logit_opacity = logit(0.9);
        cloud.splats_mut()[1].logit_opacity = logit(0.002);
        reset_opacity(&mut cloud, 0.01, &mut opt);
        assert_abs_diff_eq!(cloud.splats()[0].opacity(), 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(cloud.splats()[1].opacity(), 0.002, epsilon = 1e-12);
    }

    #[test]
    fn accumulator_averages_only_visible_iterations() {
        let mut acc = DensifyAccumulator::new(2);
        acc.add(&[0.0, 3.0]);
        acc.add(&[2.0, 1.0]);
        let avg = acc.average();
        assert_abs_diff_eq!(avg[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(avg[1], 2.0, epsilon = 1e-12);
        acc.reset(3);
        assert_eq!(acc.len(), 3);
        assert_eq!(acc.average(), vec![0.0; 3]);
    }
}
