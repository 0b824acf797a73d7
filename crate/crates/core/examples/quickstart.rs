use pdra::instancegen::{generate_instance, GenConfig, InstanceConfig};
use pdra::policy::{rollout, DecodeMode};
use pdra::solvers::{greedy_heuristic, validate_solution};
use pdra::training::{train, TrainConfig};
use rand::SeedableRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = pdra::Rng::seed_from_u64(0);
    let gen = GenConfig::for_total_nodes(20, 0)?;
    let inst = generate_instance(&gen, &InstanceConfig::default(), &mut rng)?;

    let baseline = greedy_heuristic(&inst)?;
    let policy = train(&TrainConfig::default())?.params;
    let (sol, _) = rollout(&inst, &policy, DecodeMode::Greedy, 1, &mut rng)?.remove(0);
    assert!(validate_solution(&inst, &sol)?.feasible);
    println!("{} vs {}", sol.value, baseline.value);
    Ok(())
}
