//! The objectives: mixture likelihood under two kernels and KL to an
//! unnormalised target, with their first variations at a particle cloud.
//!
//! Run with `cargo run --example functionals`.

use klflow::baselines::{mixture_data_gen, MixingSpec, RadialTargetSampler, TwoMoonsSpec};
use klflow::{BaseDistribution, Functional, KlTarget, LikelihoodKernel, Npmle, PotentialTarget};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> klflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mixing = MixingSpec::TwoMoons(TwoMoonsSpec::default());
    for kernel in [
        LikelihoodKernel::GaussianLocation,
        LikelihoodKernel::GaussianLocationScale,
    ] {
        let (data, truth) = mixture_data_gen(&mixing, kernel, 400, &mut rng)?;
        let npmle = Npmle::new(data, kernel);
        let base = BaseDistribution::centered(npmle.param_dim(), 4.0)?;
        let cloud = base.sample(800, &mut rng);
        let wide = npmle.value(&cloud, &base.log_density(&cloud))?;
        let at_truth = npmle.value(&truth, &vec![0.0; truth.rows()])?;
        let fv = npmle.first_variation(&cloud, &base.log_density(&cloud))?;
        let mean_fv = fv.iter().sum::<f64>() / fv.len() as f64;
        println!(
            "{kernel:?}: loss {wide:.4} at N(0, 4I), {at_truth:.4} at the true parameters, mean first variation {mean_fv:.4}"
        );
    }

    for alpha in [1.0, 2.0, 3.0] {
        let potential = PotentialTarget::new(alpha)?;
        let target = KlTarget::new(potential, 2)?;
        let log_z = RadialTargetSampler::log_normalizer(&potential, 2);
        let base = BaseDistribution::centered(2, 1.0)?;
        let cloud = base.sample(20_000, &mut rng);
        let kl = target.value(&cloud, &base.log_density(&cloud))? + log_z;
        println!("alpha = {alpha}: KL(N(0, I) || target) estimate {kl:.4}");
    }
    Ok(())
}
