//! Prints the statistics the synthetic generator's constants are tuned
//! against: text-clustering means, AUROC of each method on biased and
//! unbiased worlds, bias correlations and the error-by-quantile profile.
//!
//! ```text
//! cargo run --release -p bliss-core --example calibrate
//! ```

use std::time::Instant;

use bliss_core::eval::{
    avg_dict_similarities, error_quantile_profile, pearson, spearman, text_clustering_report, LabeledScores,
    ThresholdRule,
};
use bliss_core::scoring::{score_batch, Method, ScoringConfig};
use bliss_core::synth::{bias_benchmark, generate, SynthConfig};

fn main() -> bliss_core::Result<()> {
    let scoring = ScoringConfig::default();
    let start = Instant::now();
    for seed in 0..5 {
        let cfg = SynthConfig::biased(seed);
        let world = generate(&cfg)?;
        let rep = text_clustering_report(
            &world.normal_class_text(),
            &world.train,
            &world.train_labels,
            &world.dictionary,
        )?;
        let dict_sims = avg_dict_similarities(&world.test, &world.dictionary)?;
        let flags: Vec<f64> = world.test_is_anomaly.iter().map(|&a| f64::from(u8::from(a))).collect();
        let rho = spearman(&dict_sims, &world.test_bias)?;

        let bank = world.bank()?;
        let recs = score_batch(&world.test, &bank, None, &scoring, Method::Biased)?;
        let ls = LabeledScores::new(recs.iter().map(|r| r.score).collect(), world.test_is_anomaly.clone())?;
        let prof = error_quantile_profile(&ls, &dict_sims, 10, ThresholdRule::Prevalence)?;

        let b = bias_benchmark(&cfg, &scoring)?;
        let u = bias_benchmark(&SynthConfig::unbiased(seed), &scoring)?;
        let uw = generate(&SynthConfig::unbiased(seed))?;
        let u_sims = avg_dict_similarities(&uw.test, &uw.dictionary)?;
        let u_flags: Vec<f64> = uw.test_is_anomaly.iter().map(|&a| f64::from(u8::from(a))).collect();

        println!(
            "seed {seed}: img-label {:.3} label-dict {:.3} | spearman(dict,bias) {rho:.3} pearson@0 {:.3} pearson@bias {:.3}",
            rep.image_label_summary.mean,
            rep.label_dict_summary.mean,
            pearson(&u_sims, &u_flags)?,
            pearson(&dict_sims, &flags)?,
        );
        println!(
            "  biased world   bliss {:.4} biased {:.4} knn {:.4} diff {:+.4}",
            b.auroc_bliss,
            b.auroc_biased,
            b.auroc_knn,
            b.auroc_bliss - b.auroc_biased
        );
        println!(
            "  unbiased world bliss {:.4} biased {:.4} knn {:.4} diff {:+.4}",
            u.auroc_bliss,
            u.auroc_biased,
            u.auroc_knn,
            u.auroc_bliss - u.auroc_biased
        );
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ");
        println!("  fn by quantile {}", fmt(&prof.fn_proportion));
        println!("  fp by quantile {}", fmt(&prof.fp_proportion));
    }
    println!("elapsed {:.2?}", start.elapsed());
    Ok(())
}
