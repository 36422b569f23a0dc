//! Ready-made scenarios: a two-tier container stack seen from the side, under a
//! fixed or swaying camera, with optional drift.

use super::{ContainerSpec, DriftSegment, Scenario};
use crate::imgcore::{AffineTransform, BoundingBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FRAME_WIDTH: usize = 352;
pub const FRAME_HEIGHT: usize = 264;
pub const CONTAINER_WIDTH: u32 = 56;
pub const CONTAINER_HEIGHT: u32 = 40;
const GAP_X: u32 = 10;
const GAP_Y: u32 = 6;

/// Boxes of `n` containers (at most 8) in two rows of up to four, centred in the
/// frame. Index `i` sits in row `i / 4`, column `i % 4`.
pub fn stack_layout(n: usize) -> Vec<BoundingBox> {
    assert!(n <= 8, "stack layout holds at most 8 containers");
    let cols = n.clamp(1, 4) as u32;
    let rows = n.div_ceil(4).max(1) as u32;
    let total_w = cols * CONTAINER_WIDTH + (cols - 1) * GAP_X;
    let total_h = rows * CONTAINER_HEIGHT + (rows - 1) * GAP_Y;
    let x0 = (FRAME_WIDTH as u32 - total_w) / 2;
    let y0 = (FRAME_HEIGHT as u32 - total_h) / 2;
    (0..n as u32)
        .map(|i| {
            BoundingBox::new(
                x0 + (i % 4) * (CONTAINER_WIDTH + GAP_X),
                y0 + (i / 4) * (CONTAINER_HEIGHT + GAP_Y),
                CONTAINER_WIDTH,
                CONTAINER_HEIGHT,
            )
        })
        .collect()
}

fn containers(n: usize, seed: u64) -> Vec<ContainerSpec> {
    stack_layout(n)
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            ContainerSpec::new(
                i as u32 + 1,
                b,
                seed.wrapping_mul(31).wrapping_add(i as u64 + 1),
            )
        })
        .collect()
}

/// Camera sway: sinusoidal translation and roll about the frame centre, sized so
/// the inter-frame change stays within `max_shift` px and `max_rot_deg` degrees.
#[derive(Clone, Copy, Debug)]
pub struct Sway {
    pub max_shift: f64,
    pub max_rot_deg: f64,
    pub period: f64,
    pub phase: f64,
}

impl Sway {
    pub fn path(&self, duration: usize) -> Vec<AffineTransform> {
        let omega = std::f64::consts::TAU / self.period;
        // amplitude A gives a per-frame change of at most A·ω; the 0.85 leaves room
        // for the roll acting on the accumulated translation
        let amp_x = 0.85 * self.max_shift / omega;
        let amp_y = 0.4 * self.max_shift / omega;
        let amp_r = self.max_rot_deg / omega;
        let (cx, cy) = (FRAME_WIDTH as f64 / 2.0, FRAME_HEIGHT as f64 / 2.0);
        (0..duration)
            .map(|t| {
                let a = omega * t as f64 + self.phase;
                AffineTransform::rotation_about(
                    amp_r * (0.7 * a + 1.3).sin(),
                    cx,
                    cy,
                    amp_x * a.sin(),
                    amp_y * (1.3 * a + 0.4).sin() / 1.3,
                )
            })
            .collect()
    }
}

fn scenario(
    duration: usize,
    n: usize,
    camera_path: Vec<AffineTransform>,
    noise_sigma: f64,
    seed: u64,
) -> Scenario {
    Scenario {
        frame_size: [FRAME_WIDTH, FRAME_HEIGHT],
        fps: 10.0,
        duration,
        containers: containers(n, seed),
        camera_path,
        noise_sigma,
        illumination_drift: 0.0,
        intensity_scale: 1.0,
        seed,
    }
}

/// Containers at rest under a fixed camera pose.
pub fn static_stack(
    duration: usize,
    n: usize,
    pose: AffineTransform,
    noise_sigma: f64,
    seed: u64,
) -> Scenario {
    scenario(duration, n, vec![pose; duration], noise_sigma, seed)
}

/// Containers at rest under a swaying camera.
pub fn swaying_stack(
    duration: usize,
    n: usize,
    max_shift: f64,
    max_rot_deg: f64,
    noise_sigma: f64,
    seed: u64,
) -> Scenario {
    let sway = Sway {
        max_shift,
        max_rot_deg,
        period: 36.0,
        phase: (seed % 17) as f64 * 0.37,
    };
    scenario(duration, n, sway.path(duration), noise_sigma, seed)
}

/// Index of a container in an end column, and the outward drift direction, so a
/// drifting container moves into open background rather than into a neighbour.
pub fn outward_container(n: usize, rng: &mut impl Rng) -> (usize, f64) {
    let cols = n.clamp(1, 4);
    let rows = n.div_ceil(4);
    let row = rng.random_range(0..rows);
    let right = rng.random_bool(0.5);
    let in_row = if row + 1 == rows {
        n - row * 4
    } else {
        4.min(cols)
    };
    let col = if right { in_row - 1 } else { 0 };
    (row * 4 + col, if right { 1.0 } else { -1.0 })
}

/// Eight containers under camera sway with exactly one drifting laterally from
/// `onset` at `speed` px/frame. Returns the scenario and the drifting label.
pub fn drift_scenario(seed: u64, speed: f64, onset: usize, duration: usize) -> (Scenario, u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1f7);
    let mut sc = swaying_stack(duration, 8, 3.0, 0.4, 2.0, seed);
    let (idx, dir) = outward_container(8, &mut rng);
    sc.containers[idx].drift = vec![DriftSegment {
        start_frame: onset,
        u_velocity: dir * speed,
        acceleration: 0.0,
    }];
    let label = sc.containers[idx].label;
    (sc, label)
}

/// Eight containers under camera sway; one starts sliding at `onset` with lateral
/// acceleration `accel` px/frame² (a container working loose and falling).
pub fn fall_scenario(seed: u64, accel: f64, onset: usize, duration: usize) -> (Scenario, u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfa11);
    let mut sc = swaying_stack(duration, 8, 2.0, 0.3, 2.0, seed);
    let (idx, dir) = outward_container(8, &mut rng);
    sc.containers[idx].drift = vec![DriftSegment {
        start_frame: onset,
        u_velocity: 0.0,
        acceleration: dir * accel,
    }];
    let label = sc.containers[idx].label;
    (sc, label)
}
