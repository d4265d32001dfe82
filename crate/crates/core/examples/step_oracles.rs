//! Step response of one benchmark channel three ways: the rationalized
//! state-space block used by the simulator, Grünwald–Letnikov convolution,
//! and the Mittag-Leffler closed form.

use thermotwin::foc::{gl_step_response, mittag_leffler, realize, GlOptions, RationalizeOptions};
use thermotwin::plant::bench;

fn main() -> thermotwin::Result<()> {
    let g = bench::diagonal()[0];
    let ts = g.time_scale();
    let h = ts / 200.0;
    let t_end = 10.0 * ts;
    let ss = realize(&g, &RationalizeOptions::default())?.step_response(1.0, h, t_end)?;
    let gl = gl_step_response(&g, 1.0, h, t_end, &GlOptions::default())?;
    println!("G1: K={} T={} alpha={}, time scale {:.2} s", g.gain, g.time_const, g.order, ts);
    println!("     t    state-space          GL  Mittag-Leffler");
    for k in (0..ss.len()).step_by(100) {
        let t = ss.times[k];
        let ml = g.gain * mittag_leffler::unit_step(g.order, t / ts);
        println!("{t:6.1} {:14.5} {:11.5} {:15.5}", ss.values[k], gl.values[k], ml);
    }
    Ok(())
}
