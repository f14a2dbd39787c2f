//! Reference trajectories for the evaluation tasks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::mathcore::EulerAngles;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// One slow sine per axis.
    Task1,
    /// Sum of six sines per axis.
    Task2,
    /// Constant level attitude.
    Hold,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Task1 => "task1",
            TaskKind::Task2 => "task2",
            TaskKind::Hold => "hold",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "task1" => Ok(TaskKind::Task1),
            "task2" => Ok(TaskKind::Task2),
            "hold" | "holdattitude" => Ok(TaskKind::Hold),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Roll,
    Pitch,
    Yaw,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Roll, Axis::Pitch, Axis::Yaw];
}

/// `s(t) = A · Σ_f sin(2π f t)` with signed frequencies in Hz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSignal {
    pub amplitude: f64,
    pub frequencies: Vec<f64>,
}

impl AxisSignal {
    pub fn new(amplitude: f64, frequencies: &[f64]) -> Self {
        AxisSignal { amplitude, frequencies: frequencies.to_vec() }
    }

    pub fn zero() -> Self {
        AxisSignal { amplitude: 0.0, frequencies: Vec::new() }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * self.frequencies.iter().map(|f| (2.0 * PI * f * t).sin()).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub roll: AxisSignal,
    pub pitch: AxisSignal,
    pub yaw: AxisSignal,
    /// Constant depth reference (m).
    pub depth: f64,
    /// s
    pub duration: f64,
}

pub const TASK1_FREQUENCY: f64 = 0.1;
pub const DEFAULT_DEPTH: f64 = 1.0;
pub const DEFAULT_DURATION: f64 = 20.0;

impl TaskSpec {
    pub fn task2() -> Self {
        TaskSpec {
            kind: TaskKind::Task2,
            roll: AxisSignal::new(0.95, &[0.15, 0.3, 0.5, -0.9, 1.8, -3.0]),
            pitch: AxisSignal::new(1.10, &[-0.1, 0.2, 0.5, -1.0, 2.0, 3.5]),
            yaw: AxisSignal::new(1.35, &[-0.1, 0.2, 0.4, 0.8, 1.6, -3.2]),
            depth: DEFAULT_DEPTH,
            duration: DEFAULT_DURATION,
        }
    }

    /// Single 0.1 Hz sine per axis with the Task 2 amplitudes.
    pub fn task1() -> Self {
        let t2 = Self::task2();
        TaskSpec {
            kind: TaskKind::Task1,
            roll: AxisSignal::new(t2.roll.amplitude, &[TASK1_FREQUENCY]),
            pitch: AxisSignal::new(t2.pitch.amplitude, &[TASK1_FREQUENCY]),
            yaw: AxisSignal::new(t2.yaw.amplitude, &[TASK1_FREQUENCY]),
            ..t2
        }
    }

    pub fn hold() -> Self {
        TaskSpec {
            kind: TaskKind::Hold,
            roll: AxisSignal::zero(),
            pitch: AxisSignal::zero(),
            yaw: AxisSignal::zero(),
            depth: DEFAULT_DEPTH,
            duration: DEFAULT_DURATION,
        }
    }

    pub fn from_kind(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Task1 => Self::task1(),
            TaskKind::Task2 => Self::task2(),
            TaskKind::Hold => Self::hold(),
        }
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn signal(&self, axis: Axis) -> &AxisSignal {
        match axis {
            Axis::Roll => &self.roll,
            Axis::Pitch => &self.pitch,
            Axis::Yaw => &self.yaw,
        }
    }

    /// Raw (unwrapped) reference angle in radians.
    pub fn reference(&self, axis: Axis, t: f64) -> f64 {
        self.signal(axis).value(t)
    }

    pub fn reference_attitude(&self, t: f64) -> EulerAngles {
        EulerAngles::new(self.roll.value(t), self.pitch.value(t), self.yaw.value(t))
    }
}
