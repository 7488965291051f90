//! Capture-the-flag: two robots sweep a small building for three flags while
//! security cameras may terminate them.
//!
//! The building has four rooms and two hallways; rooms connect only through
//! hallways. Flags are collected on entering their location. A camera
//! detection is counted on entering a monitored room; the second detection
//! terminates the robot. After its first detection a robot notifies its peer
//! through the interaction protocol, publishing the camera's location to a
//! shared avoid list that blocks room entries for a while.

use std::fmt::Write as _;

use crate::text::{parse_deployment, parse_model, Deployment, ModelDocument};

/// Location layout: RA=0, RB=1, RC=2, RD=3, HA=4, HB=5.
const LOCATIONS: [&str; 6] = ["RA", "RB", "RC", "RD", "HA", "HB"];
const EDGES: [(usize, usize); 5] = [(0, 4), (2, 4), (4, 5), (1, 5), (3, 5)];
/// Rooms host flags and cameras; hallways are never camera-monitored, so a
/// robot always has an unavoided way out.
const ROOMS: [usize; 4] = [0, 1, 2, 3];

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureFlagConfig {
    /// Locations holding a flag.
    pub flags: Vec<usize>,
    /// Monitored rooms (at most one camera per room).
    pub cameras: Vec<usize>,
    /// Mean sojourn per location in time units.
    pub sojourn_mean: f64,
    /// How long a notified camera location stays off-limits.
    pub avoid_duration: f64,
    pub horizon_time: f64,
}

impl Default for CaptureFlagConfig {
    fn default() -> Self {
        CaptureFlagConfig {
            flags: vec![1, 3, 5],   // RB, RD, HB
            cameras: vec![0, 2],    // the flagless start rooms RA and RC
            sojourn_mean: 1.0,
            avoid_duration: 3.5,
            horizon_time: 12.0,
        }
    }
}

/// The canonical two-robot scenario.
pub fn gen_capture_flag() -> (ModelDocument, Deployment) {
    gen_capture_flag_with(&CaptureFlagConfig::default())
}

pub fn gen_capture_flag_with(cfg: &CaptureFlagConfig) -> (ModelDocument, Deployment) {
    let n = LOCATIONS.len();
    let mut flag = vec![0; n];
    for &f in &cfg.flags {
        flag[f] = 1;
    }
    let mut camera = vec![0; n];
    for &c in &cfg.cameras {
        camera[c] = 1;
    }
    let rate = 1.0 / cfg.sojourn_mean;

    let mut m = String::new();
    let _ = writeln!(m, "// Capture-the-flag: two robots, three flags, two cameras.");
    let _ = writeln!(m, "globals {{");
    let _ = writeln!(m, "  numFlag = 0;");
    let _ = writeln!(m, "  flag = [{}];", join_ints(&flag));
    let _ = writeln!(m, "  camera = [{}];", join_ints(&camera));
    let _ = writeln!(m, "  avoid_until = [{}];", vec!["0.0"; n].join(", "));
    let _ = writeln!(m, "}}");
    let _ = writeln!(m);
    let _ = writeln!(m, "agentclass Robot {{");
    let _ = writeln!(m, "  locals {{");
    let _ = writeln!(m, "    detected_time = 0;");
    let _ = writeln!(m, "    notified = 0;");
    let _ = writeln!(m, "    robot_pos = 0;");
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "  spatial {{");
    for id in LOCATIONS {
        let _ = writeln!(m, "    state {id} delay exp({rate})");
    }
    for &(a, b) in &EDGES {
        for (src, dst) in [(a, b), (b, a)] {
            if ROOMS.contains(&dst) {
                let _ = writeln!(
                    m,
                    "    on {} -> {} guard avoid_until[{dst}] <= now()",
                    LOCATIONS[src], LOCATIONS[dst]
                );
            } else {
                let _ = writeln!(m, "    on {} -> {}", LOCATIONS[src], LOCATIONS[dst]);
            }
        }
    }
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "  interaction {{");
    let _ = writeln!(m, "    entry N0 exit N2");
    let _ = writeln!(m, "    state N0 delay det(0)");
    let _ = writeln!(m, "    state N1 delay det(0)");
    let _ = writeln!(m, "    state N2 delay det(0)");
    let _ = writeln!(
        m,
        "    on N0 -> N1 do {{ avoid_until[self_pos()] = now() + {}; }}",
        crate::script::pretty_real(cfg.avoid_duration)
    );
    let _ = writeln!(m, "    on N1 -> N2 do {{ notified = 1; }}");
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "  predicates {{");
    let _ = writeln!(m, "    failure terminated when detected_time == 2 do {{ robot_pos = -1; }}");
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "  hooks {{");
    let _ = writeln!(
        m,
        "    on_move {{ robot_pos = self_pos(); if (flag[self_pos()] == 1) {{ flag[self_pos()] = 0; numFlag = numFlag + 1; }} if (camera[self_pos()] == 1) {{ detected_time = detected_time + 1; }} }}"
    );
    let _ = writeln!(m, "    check_interaction detected_time == 1 && notified == 0");
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "}}");

    let doc = parse_model(&m).expect("generated capture-the-flag model must parse");

    let dep_text = format!(
        "horizon_time = {h}\nproperty = \"F[SystemTime<={b}] (numFlag==3 && robotSFNum<=1)\"\n\n\
         [[instances]]\nclass = \"Robot\"\ncount = 1\ninitial = \"RA\"\n\n\
         [[instances]]\nclass = \"Robot\"\ncount = 1\ninitial = \"RC\"\n",
        h = cfg.horizon_time,
        b = 10.0,
    );
    let deployment = parse_deployment(&dep_text).expect("generated deployment must parse");

    (doc, deployment)
}

fn join_ints(values: &[i32]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}
