//! Compares analytic gradients of every objective against central finite
//! differences on a small random network.

use gfn::dag::build_didactic_dag;
use gfn::dag::DidacticSize;
use gfn::nn::Activation;
use gfn::objectives::{batch_loss, GfnModel, LossOptions, Objective, PbMode};
use gfn::rollout::{sample_trajectories_seeded, UniformPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = build_didactic_dag(DidacticSize::Small);
    let trajs = sample_trajectories_seeded(&env, &UniformPolicy, 4, 1)?;
    let opts = LossOptions::default();
    let h = 1e-5;
    for objective in Objective::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = GfnModel::dense(objective, &env, &[8, 8], Activation::LeakyRelu, PbMode::Learned, &mut rng)?;
        let out = batch_loss(&m, &env, &trajs, &opts)?;
        let mut worst: f64 = 0.0;
        for i in 0..m.backbone().params().len() {
            let orig = m.backbone().params()[i];
            m.backbone_mut().params_mut()[i] = orig + h;
            let up = batch_loss(&m, &env, &trajs, &opts)?.loss;
            m.backbone_mut().params_mut()[i] = orig - h;
            let down = batch_loss(&m, &env, &trajs, &opts)?.loss;
            m.backbone_mut().params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - out.grad_backbone[i]).abs() / fd.abs().max(1e-3));
        }
        println!(
            "{:<6} loss {:.4e}  {} params  max relative error {worst:.2e}",
            objective.as_str(),
            out.loss,
            m.num_params()
        );
    }
    Ok(())
}
