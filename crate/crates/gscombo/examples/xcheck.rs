use gscombo::sim::generate_trial;
use gscombo::survival::{AccrualCensoring, TwoArmModel};
use gscombo::weight::WeightSpec;
use gscombo::wlrt::{freeze, joint_statistics};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let model = TwoArmModel::two_piece(2f64.ln() / 6.0, 0.7, 2.0, 0.5).unwrap();
    let ac = AccrualCensoring::uniform(14.0, 18.0).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(5150);
    rng.set_stream(1);
    let trial = generate_trial(&model, &ac, 926, &mut rng);
    let d = 596usize;
    let k_int = (0.6f64 * d as f64).ceil() as usize;
    let t_int = trial.calendar_time_of_event(k_int).unwrap();
    let t_fin = trial.calendar_time_of_event(d).unwrap();
    println!("t_int={t_int:.10} t_fin={t_fin:.10}");
    let weights = [WeightSpec::log_rank(), WeightSpec::late_emphasis()];
    for (label, t) in [("int", t_int), ("fin", t_fin)] {
        let view = freeze(&trial, t);
        let js = joint_statistics(&view, &weights).unwrap();
        println!(
            "{label}: n_view={} events={} z00={:.10} z01={:.10} G00={:.8} V00={:.8}",
            view.subjects(),
            view.events(),
            -js.statistic(0).standardized,
            -js.statistic(1).standardized,
            js.numerators[0],
            js.information[0][0],
        );
    }
    // full-precision dump for the python cross-check
    let mut text = String::from("entry,time,event,arm\n");
    for s in &trial.subjects {
        text.push_str(&format!("{:.17e},{:.17e},1,{}\n", s.entry, s.event_time, s.arm));
    }
    std::fs::write("/root/scratch/xtrial.csv", text).unwrap();
}
