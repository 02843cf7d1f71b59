//! Streaming analysis of training-event logs: non-finite loss detection with
//! emergency escalation, loss and gradient spike rules over rolling windows,
//! cumulative anomaly counters, and rolling throughput.
//!
//! A loss at step t is a spike when `L_t > 1.5 * mean(last k finite losses)`
//! with k = 20; a gradient norm spikes when it exceeds twice the mean of the
//! prior k norms. Both rules stay silent until their window is full, and the
//! value under test never enters the window it is compared against.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("step {next} arrived after step {prev}; steps must strictly increase")]
    StreamOrder { prev: u64, next: u64 },
    #[error("step {step}: step_time_sec must be positive and finite")]
    BadStepTime { step: u64 },
    #[error("no events observed")]
    EmptyStream,
    #[error("stream contains no finite loss")]
    NoFiniteLoss,
}

/// JSON encoding for possibly non-finite losses: finite values are plain
/// numbers, non-finite ones the strings "NaN", "Infinity", "-Infinity".
pub mod loss_value {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("Infinity")
        } else {
            s.serialize_str("-Infinity")
        }
    }

    struct LossVisitor;

    impl Visitor<'_> for LossVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or one of \"NaN\", \"Infinity\", \"-Infinity\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "NaN" => Ok(f64::NAN),
                "Infinity" => Ok(f64::INFINITY),
                "-Infinity" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("unrecognized loss string `{other}`"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(LossVisitor)
    }
}

/// One logged optimizer step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEvent {
    pub step: u64,
    #[serde(with = "loss_value")]
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_norm_post_clip: Option<f64>,
    #[serde(rename = "step_time_sec")]
    pub step_time_s: f64,
    #[serde(rename = "tokens")]
    pub tokens_in_step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_preview: Option<String>,
}

impl RunEvent {
    pub fn new(step: u64, loss: f64, step_time_s: f64, tokens: u64) -> Self {
        RunEvent {
            step,
            loss,
            grad_norm_post_clip: None,
            step_time_s,
            tokens_in_step: tokens,
            batch_preview: None,
        }
    }

    pub fn with_grad(mut self, grad_norm: f64) -> Self {
        self.grad_norm_post_clip = Some(grad_norm);
        self
    }

    pub fn with_preview(mut self, preview: impl Into<String>) -> Self {
        self.batch_preview = Some(preview.into());
        self
    }
}

/// An anomaly detected while observing a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    NanInf {
        step: u64,
        #[serde(with = "loss_value")]
        loss: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_preview: Option<String>,
    },
    EmergencySave {
        step: u64,
        consecutive: u32,
    },
    LossSpike {
        step: u64,
        loss: f64,
        window_mean: f64,
    },
    GradSpike {
        step: u64,
        grad_norm: f64,
        window_mean: f64,
    },
}

/// End-of-run aggregate. `init_loss` anchors at step 10 (or the first
/// finite loss at a later step; the first finite loss overall if the stream
/// never reaches step 10), matching how sweep reductions are reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub init_loss: f64,
    pub final_loss: f64,
    pub min_loss: f64,
    pub reduction_pct: f64,
    pub peak_grad: f64,
    pub mean_grad: f64,
    pub nan_count: u64,
    pub anomaly_count: u64,
}

const WINDOW: usize = 20;
const LOSS_SPIKE_FACTOR: f64 = 1.5;
const GRAD_SPIKE_FACTOR: f64 = 2.0;
const EMERGENCY_AFTER: u32 = 3;
const INIT_LOSS_STEP: u64 = 10;

/// Single-writer state for one run stream.
#[derive(Debug, Clone)]
pub struct Monitor {
    window: usize,
    loss_window: VecDeque<f64>,
    grad_window: VecDeque<f64>,
    throughput_window: VecDeque<(u64, f64)>,
    consecutive_nan: u32,
    nan_count: u64,
    anomaly_count: u64,
    last_step: Option<u64>,
    emergency_seen: bool,
    init_loss: Option<f64>,
    first_finite: Option<f64>,
    final_loss: Option<f64>,
    min_loss: f64,
    peak_grad: f64,
    grad_sum: f64,
    grad_n: u64,
}

impl Default for Monitor {
    fn default() -> Self {
        Monitor::new()
    }
}

impl Monitor {
    pub fn new() -> Self {
        Monitor::with_window(WINDOW)
    }

    /// `window` is the spike-rule history length k; must be >= 1.
    pub fn with_window(window: usize) -> Self {
        assert!(window >= 1, "window must be >= 1");
        Monitor {
            window,
            loss_window: VecDeque::with_capacity(window),
            grad_window: VecDeque::with_capacity(window),
            throughput_window: VecDeque::with_capacity(window),
            consecutive_nan: 0,
            nan_count: 0,
            anomaly_count: 0,
            last_step: None,
            emergency_seen: false,
            init_loss: None,
            first_finite: None,
            final_loss: None,
            min_loss: f64::INFINITY,
            peak_grad: 0.0,
            grad_sum: 0.0,
            grad_n: 0,
        }
    }

    /// Feeds one event; returns the findings it triggered. Steps must
    /// strictly increase across calls.
    pub fn observe(&mut self, event: &RunEvent) -> Result<Vec<Finding>, MonitorError> {
        if let Some(prev) = self.last_step {
            if event.step <= prev {
                return Err(MonitorError::StreamOrder {
                    prev,
                    next: event.step,
                });
            }
        }
        if !(event.step_time_s > 0.0) || !event.step_time_s.is_finite() {
            return Err(MonitorError::BadStepTime { step: event.step });
        }
        self.last_step = Some(event.step);

        let mut findings = Vec::new();
        if event.loss.is_finite() {
            if self.loss_window.len() == self.window {
                let mean = mean(&self.loss_window);
                if event.loss > LOSS_SPIKE_FACTOR * mean {
                    findings.push(Finding::LossSpike {
                        step: event.step,
                        loss: event.loss,
                        window_mean: mean,
                    });
                }
            }
            self.consecutive_nan = 0;
            push_capped(&mut self.loss_window, event.loss, self.window);
            if self.first_finite.is_none() {
                self.first_finite = Some(event.loss);
            }
            if self.init_loss.is_none() && event.step >= INIT_LOSS_STEP {
                self.init_loss = Some(event.loss);
            }
            self.final_loss = Some(event.loss);
            self.min_loss = self.min_loss.min(event.loss);
        } else {
            self.nan_count += 1;
            self.consecutive_nan += 1;
            findings.push(Finding::NanInf {
                step: event.step,
                loss: event.loss,
                batch_preview: event.batch_preview.clone(),
            });
            if self.consecutive_nan == EMERGENCY_AFTER {
                findings.push(Finding::EmergencySave {
                    step: event.step,
                    consecutive: self.consecutive_nan,
                });
                self.emergency_seen = true;
            }
        }

        if let Some(g) = event.grad_norm_post_clip {
            if g.is_finite() {
                if self.grad_window.len() == self.window {
                    let mean = mean(&self.grad_window);
                    if g > GRAD_SPIKE_FACTOR * mean {
                        findings.push(Finding::GradSpike {
                            step: event.step,
                            grad_norm: g,
                            window_mean: mean,
                        });
                    }
                }
                push_capped(&mut self.grad_window, g, self.window);
                self.peak_grad = self.peak_grad.max(g);
                self.grad_sum += g;
                self.grad_n += 1;
            }
        }

        push_capped(
            &mut self.throughput_window,
            (event.tokens_in_step, event.step_time_s),
            self.window,
        );
        self.anomaly_count += findings.len() as u64;
        Ok(findings)
    }

    /// Tokens per second over the rolling window.
    pub fn throughput(&self) -> Result<f64, MonitorError> {
        if self.throughput_window.is_empty() {
            return Err(MonitorError::EmptyStream);
        }
        let tokens: u64 = self.throughput_window.iter().map(|&(t, _)| t).sum();
        let secs: f64 = self.throughput_window.iter().map(|&(_, s)| s).sum();
        Ok(tokens as f64 / secs)
    }

    /// True once an EmergencySave has been emitted; drives exit status 3.
    pub fn emergency_seen(&self) -> bool {
        self.emergency_seen
    }

    pub fn nan_count(&self) -> u64 {
        self.nan_count
    }

    pub fn anomaly_count(&self) -> u64 {
        self.anomaly_count
    }

    pub fn summary(&self) -> Result<RunSummary, MonitorError> {
        if self.last_step.is_none() {
            return Err(MonitorError::EmptyStream);
        }
        let init = self
            .init_loss
            .or(self.first_finite)
            .ok_or(MonitorError::NoFiniteLoss)?;
        let final_loss = self.final_loss.expect("finite loss recorded");
        let reduction_pct = if init == 0.0 {
            0.0
        } else {
            (init - final_loss) / init * 100.0
        };
        Ok(RunSummary {
            init_loss: init,
            final_loss,
            min_loss: self.min_loss,
            reduction_pct,
            peak_grad: self.peak_grad,
            mean_grad: if self.grad_n == 0 {
                0.0
            } else {
                self.grad_sum / self.grad_n as f64
            },
            nan_count: self.nan_count,
            anomaly_count: self.anomaly_count,
        })
    }
}

fn mean(window: &VecDeque<f64>) -> f64 {
    window.iter().sum::<f64>() / window.len() as f64
}

fn push_capped<T>(window: &mut VecDeque<T>, value: T, cap: usize) {
    if window.len() == cap {
        window.pop_front();
    }
    window.push_back(value);
}

/// Folds a whole stream into findings plus a summary.
pub fn summarize(events: &[RunEvent]) -> Result<(Vec<Finding>, RunSummary), MonitorError> {
    let mut monitor = Monitor::new();
    let mut findings = Vec::new();
    for event in events {
        findings.extend(monitor.observe(event)?);
    }
    let summary = monitor.summary()?;
    Ok((findings, summary))
}
