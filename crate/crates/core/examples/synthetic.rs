//! Pretrain and fine-tune on a generated dataset, then compare against the
//! reference scorers.

use hincrec::config::RunConfig;
use hincrec::metrics::{EvalReport, PopularityScorer, RandomScorer};
use hincrec::pipeline::Prepared;
use hincrec::synth::{generate_synthetic, SynthConfig};

fn main() {
    let ds = generate_synthetic(&SynthConfig::default()).expect("default config is valid");
    let cfg = RunConfig::parse("pretrain_episodes = 2000\nE = 2000\n").expect("valid config");
    let p = Prepared::new(ds, &cfg);
    println!("{:?}", p.split.report);

    let mut model = p.init_model(&cfg);
    p.pretrain(&mut model, &cfg, &mut |_, _| {}).unwrap();
    let sl = p.evaluate(&model, &cfg).unwrap();
    let logs = p.train_rl(&mut model, &cfg, &mut |_| {}).unwrap();
    let mean_reward = logs.iter().map(|l| l.total_reward).sum::<f64>() / logs.len() as f64;
    let rl = p.evaluate(&model, &cfg).unwrap();
    let random = p.evaluate_with(&mut RandomScorer::new(cfg.train.seed), &cfg).unwrap();
    let popular = p.evaluate_with(&mut PopularityScorer(p.split.train.concept_popularity()), &cfg).unwrap();

    println!("mean episode reward {mean_reward:.3}");
    println!("scorer\t{}", EvalReport::tsv_header());
    for (name, r) in [("random", random), ("popularity", popular), ("SL", sl), ("RL", rl)] {
        println!("{name}\t{}", r.to_tsv());
    }
}
