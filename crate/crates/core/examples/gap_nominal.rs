//! ν-gap distances inside the step-amplitude family and the nominal member
//! that minimizes the worst-case gap.

use thermotwin::gap::{gap_matrix, select_nominal, GapOptions};
use thermotwin::plant::bench;

fn main() -> thermotwin::Result<()> {
    let family = bench::family();
    let m = gap_matrix(&family, &GapOptions::default())?;
    for (i, g) in family.iter().enumerate() {
        let row: Vec<String> = (0..m.len()).map(|j| format!("{:.4}", m.get(i, j))).collect();
        println!("G{} K={:.4} T={:.3} alpha={:.2}  [{}]", i + 1, g.gain, g.time_const, g.order, row.join(", "));
    }
    let (idx, nominal) = select_nominal(&family, &m)?;
    println!("nominal: member {} ({nominal:?})", idx + 1);
    Ok(())
}
