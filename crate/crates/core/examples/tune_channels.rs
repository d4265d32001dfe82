//! Tunes the benchmark diagonal and prints the achieved specifications.

use thermotwin::plant::bench;
use thermotwin::tuner::{tune_diagonal, TuningSpec};

fn main() {
    let spec = TuningSpec::default();
    println!("ch        K        I     pm     gm      wc   slope   T_B    S_A      itae feasible");
    for (ch, res) in tune_diagonal(&bench::diagonal(), &spec).into_iter().enumerate() {
        match res {
            Ok(r) => println!(
                "{:2} {:8.4} {:8.4} {:6.2} {:6.1} {:7.4} {:6.2} {:6.1} {:6.1} {:9.2} {}",
                ch + 1,
                r.gains.prop_k,
                r.gains.integ_i,
                r.achieved.phase_margin_deg,
                r.achieved.gain_margin_db,
                r.achieved.gain_crossover_w,
                r.flat_phase_slope,
                r.t_peak_hf_db,
                r.s_db_at_wa,
                r.itae_value,
                r.feasible
            ),
            Err(e) => println!("{:2} error: {e}", ch + 1),
        }
    }
}
