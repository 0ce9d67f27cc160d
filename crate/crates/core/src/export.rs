// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! CSV tables consumed by the plotting scripts.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes.

use std::fmt::Write;

use crate::agents::{LearningCurve, TrainEpisode};
use crate::ensemble::{DeviceOffsets, Histogram};
use crate::eval::{EnsembleStats, PulseOverlay, SweepResult};

pub const HISTOGRAM_HEADER: &str = "parameter,bin_left,bin_right,count";
pub const EPISODE_HEADER: &str = "episode,d_omega1,d_omega2,d_g,o1,o2,o3,f_oct,f_rl,reward";
pub const CURVE_HEADER: &str = "episode,f_rl,running_best";
pub const STATS_HEADER: &str = "method,M,seed,mean,std";
pub const DEVICES_HEADER: &str = "method,device_index,d_omega1,d_omega2,d_g,fidelity";
pub const SWEEP_HEADER: &str = "axis,level,method,M,seed,mean,std";
pub const GRAPE_HEADER: &str = "iteration,infidelity";
pub const SAMPLES_HEADER: &str = "index,d_omega1,d_omega2,d_g";
pub const SETTING_HEADER: &str = "setting,method,fidelity";

fn table(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v}").expect("writing to a String");
    }
    s
}

pub fn histogram_csv(histograms: &[Histogram]) -> String {
    table(
        HISTOGRAM_HEADER,
        histograms.iter().flat_map(|h| {
            h.counts
                .iter()
                .enumerate()
                .map(move |(i, c)| format!("{},{},{},{c}", h.parameter, h.edges[i], h.edges[i + 1]))
        }),
    )
}

pub fn noise_samples_csv(samples: &[DeviceOffsets]) -> String {
    table(
        SAMPLES_HEADER,
        samples.iter().enumerate().map(|(i, s)| format!("{i},{}", join(&s.as_array()))),
    )
}

pub fn episodes_csv(episodes: &[TrainEpisode]) -> String {
    table(
        EPISODE_HEADER,
        episodes.iter().map(|e| {
            let o = &e.observation.0;
            format!(
                "{},{},{}",
                e.episode,
                join(&e.offsets.as_array()),
                join(&[o[0], o[1], o[2], e.f_oct, e.f_rl, e.reward])
            )
        }),
    )
}

pub fn learning_curve_csv(curve: &LearningCurve) -> String {
    table(
        CURVE_HEADER,
        (0..curve.len()).map(|i| format!("{},{},{}", curve.episode[i], curve.f_rl[i], curve.running_best[i])),
    )
}

pub fn grape_history_csv(history: &[f64]) -> String {
    table(
        GRAPE_HEADER,
        history.iter().enumerate().map(|(i, v)| format!("{i},{v}")),
    )
}

/// One row per method; `std` is the population standard deviation.
pub fn stats_csv(stats: &[EnsembleStats]) -> String {
    table(
        STATS_HEADER,
        stats
            .iter()
            .map(|s| format!("{},{},{},{},{}", s.method, s.m(), s.seed, s.mean, s.std)),
    )
}

pub fn devices_csv(stats: &[EnsembleStats]) -> String {
    table(
        DEVICES_HEADER,
        stats.iter().flat_map(|s| {
            s.devices.iter().enumerate().map(move |(i, d)| {
                format!("{},{i},{},{}", s.method, join(&d.offsets.as_array()), d.fidelity)
            })
        }),
    )
}

pub fn sweep_csv(sweeps: &[SweepResult]) -> String {
    table(
        SWEEP_HEADER,
        sweeps.iter().flat_map(|sw| {
            sw.levels.iter().zip(&sw.stats).map(move |(level, s)| {
                format!(
                    "{},{level},{},{},{},{},{}",
                    sw.axis.name(),
                    s.method,
                    s.m(),
                    s.seed,
                    s.mean,
                    s.std
                )
            })
        }),
    )
}

/// `(setting, method, fidelity)` rows for the nominal and single-device
/// evaluations.
pub fn settings_csv(rows: &[(String, String, f64)]) -> String {
    table(
        SETTING_HEADER,
        rows.iter().map(|(setting, method, f)| format!("{setting},{method},{f}")),
    )
}

pub fn pulse_overlay_csv(overlay: &PulseOverlay) -> String {
    let mut header = String::from("time,baseline");
    for (name, _) in &overlay.methods {
        header.push(',');
        header.push_str(name);
    }
    table(
        &header,
        (0..overlay.time.len()).map(|j| {
            let mut row = vec![overlay.time[j], overlay.baseline[j]];
            row.extend(overlay.methods.iter().map(|(_, v)| v[j]));
            join(&row)
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Observation;
    use crate::eval::DeviceResult;

    #[test]
    fn histogram_rows() {
        let h = Histogram {
            parameter: "d_g",
            edges: vec![-1.0, 0.0, 1.0],
            counts: vec![3, 4],
            mean: 0.0,
            sigma_markers: (-0.5, 0.5),
        };
        assert_eq!(histogram_csv(&[h]), "parameter,bin_left,bin_right,count\nd_g,-1,0,3\nd_g,0,1,4\n");
    }

    #[test]
    fn episode_row_layout() {
        let e = TrainEpisode {
            episode: 7,
            offsets: DeviceOffsets {
                d_omega1: 1e-3,
                d_omega2: -2e-3,
                d_g: 5e-5,
            },
            observation: Observation([1.0, -2.0, 1.0]),
            f_oct: 0.5,
            f_rl: 0.75,
            reward: 0.25,
        };
        let csv = episodes_csv(&[e]);
        assert_eq!(csv.lines().nth(1).unwrap(), "7,0.001,-0.002,0.00005,1,-2,1,0.5,0.75,0.25");
    }

    #[test]
    fn stats_and_devices() {
        let s = EnsembleStats::from_devices(
            "oct",
            4,
            vec![
                DeviceResult {
                    offsets: DeviceOffsets::ZERO,
                    fidelity: 0.5,
                },
                DeviceResult {
                    offsets: DeviceOffsets::ZERO,
                    fidelity: 1.0,
                },
            ],
        )
        .unwrap();
        assert_eq!(stats_csv(&[s.clone()]), "method,M,seed,mean,std\noct,2,4,0.75,0.25\n");
        assert_eq!(devices_csv(&[s]).lines().count(), 3);
    }

    #[test]
    fn overlay_columns() {
        let o = PulseOverlay {
            time: vec![0.5, 1.5],
            baseline: vec![0.1, 0.2],
            methods: vec![("td3".into(), vec![0.1, 0.25])],
        };
        assert_eq!(pulse_overlay_csv(&o), "time,baseline,td3\n0.5,0.1,0.1\n1.5,0.2,0.25\n");
    }
}
