use std::f64::consts::PI;

use rand::Rng;

use super::{EnvConfig, NetworkState, Ue};

/// The seven admissible headings.
pub const HEADINGS: [f64; 7] = [0.0, PI / 12.0, -PI / 12.0, PI / 6.0, -PI / 6.0, PI / 3.0, -PI / 3.0];

/// Folds `x` back into `[-r, r]`; returns whether an odd number of
/// reflections happened.
fn reflect(x: &mut f64, r: f64) -> bool {
    let mut flipped = false;
    while *x > r || *x < -r {
        if *x > r {
            *x = 2.0 * r - *x;
        } else {
            *x = -2.0 * r - *x;
        }
        flipped = !flipped;
    }
    flipped
}

fn move_ue<R: Rng + ?Sized>(ue: &mut Ue, cfg: &EnvConfig, dt: f64, rng: &mut R) {
    if rng.random_bool(cfg.p_turn) {
        ue.heading = HEADINGS[rng.random_range(0..HEADINGS.len())];
    }
    let step = ue.speed * dt;
    ue.position[0] += ue.dir_x * step * ue.heading.cos();
    ue.position[1] += step * ue.heading.sin();
    let r = cfg.cell_radius_m;
    if reflect(&mut ue.position[0], r) {
        ue.dir_x = -ue.dir_x;
    }
    if reflect(&mut ue.position[1], r) {
        ue.heading = -ue.heading;
    }
}

/// Moves every UE `speed·dt` along its heading, resampling the heading with
/// probability `p_turn` first and reflecting off the square cell boundary.
pub fn step_mobility<R: Rng + ?Sized>(state: &mut NetworkState, cfg: &EnvConfig, dt: f64, rng: &mut R) {
    for du in &mut state.dus {
        for ue in &mut du.ues {
            move_ue(ue, cfg, dt, rng);
        }
    }
}
