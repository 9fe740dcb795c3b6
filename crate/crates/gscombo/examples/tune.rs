use gscombo::design::*;
use gscombo::survival::{AccrualCensoring, TwoArmModel};
use gscombo::weight::WeightSpec;

fn spec(theta: f64, rho_s: f64, source: SourceKind) -> DesignSpec {
    DesignSpec {
        model: TwoArmModel::two_piece(2f64.ln() / 6.0, theta, 2.0, 0.5).unwrap(),
        ac: AccrualCensoring::uniform(14.0, 18.0).unwrap(),
        combo: vec![WeightSpec::log_rank(), WeightSpec::late_emphasis()],
        stage_fractions: vec![0.6, 1.0],
        monitor: MonitorRule::SurrogateEvents,
        alpha: 0.025,
        beta: 0.1,
        spending: SpendingFamily::Power { param: rho_s },
        b: 30,
        source,
        mvn: MvnSettings::default(),
    }
}

fn main() {
    for rho_s in [3.10, 3.12, 3.14] {
        println!("== rho_s = {rho_s}");
        for theta in [0.7, 0.6, 0.5] {
            for source in [SourceKind::PredSto, SourceKind::PredExa] {
                let r = design(&spec(theta, rho_s, source)).unwrap();
                println!(
                    "  theta={theta} {source:?}: n={} d={} ip={:.4} g={:?}",
                    r.n, r.d, r.power_by_stage[0],
                    r.boundaries.iter().map(|g| (g * 1e4).round() / 1e4).collect::<Vec<_>>()
                );
            }
        }
    }
}
