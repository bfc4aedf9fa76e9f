//! Plain-text scenario files: one `key = value` per line, `#` comments,
//! SI units. Human-diffable and round-trippable.
//!
//! Keys:
//! `capacity_bps`, `packet_bytes`, `overhead_bytes`, `prop_delay_s`,
//! `buffer_delay_s`, `n_users`, `w_max`, `loss_model` (red | droptail |
//! constant), `red.min_th_s`, `red.max_th_s`, `red.p_max`, `red.w_q`
//! (optional, default 1), `constant.k`, plus optional run controls
//! `run.t_end_s`, `run.output_dt_s`, `run.seed`, `run.grid_cells`,
//! `run.courant`.

use std::collections::BTreeMap;

use crate::model::{LossModel, NetworkParams, RedAveraging, RedConfig};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Optional run controls a scenario file may carry; command-line flags
/// override them.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunControls<S: Scalar> {
    pub t_end: Option<S>,
    pub output_dt: Option<S>,
    pub seed: Option<u64>,
    pub grid_cells: Option<usize>,
    pub courant: Option<S>,
}

/// A parsed scenario: network parameters, loss policy, run controls.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario<S: Scalar> {
    pub params: NetworkParams<S>,
    pub loss: LossModel<S>,
    pub run: RunControls<S>,
    /// Wire-format fields preserved for exact emission.
    capacity_bps: S,
    packet_bytes: S,
    overhead_bytes: S,
}

impl<S: Scalar> Scenario<S> {
    pub fn new(
        capacity_bps: S,
        packet_bytes: S,
        overhead_bytes: S,
        prop_delay: S,
        buffer_delay: S,
        n_users: u32,
        w_max: S,
        loss: LossModel<S>,
        run: RunControls<S>,
    ) -> Result<Self> {
        let params = NetworkParams::from_wire(
            capacity_bps,
            packet_bytes,
            overhead_bytes,
            prop_delay,
            buffer_delay,
            n_users,
            w_max,
        )?;
        loss.validate()?;
        Ok(Scenario {
            params,
            loss,
            run,
            capacity_bps,
            packet_bytes,
            overhead_bytes,
        })
    }

    /// Same scenario with a different user count (sweep helper).
    pub fn with_n_users(&self, n_users: u32) -> Result<Self> {
        Scenario::new(
            self.capacity_bps,
            self.packet_bytes,
            self.overhead_bytes,
            self.params.prop_delay,
            self.params.buffer_delay,
            n_users,
            self.params.w_max,
            self.loss.clone(),
            self.run.clone(),
        )
    }

    /// Same scenario with RED p_max replaced (sweep helper); errors if the
    /// loss model is not RED.
    pub fn with_p_max(&self, p_max: S) -> Result<Self> {
        let loss = match &self.loss {
            LossModel::Red { config, averaging } => LossModel::Red {
                config: RedConfig {
                    p_max,
                    ..config.clone()
                },
                averaging: *averaging,
            },
            _ => {
                return Err(Error::InvalidParameter(
                    "p_max override requires loss_model = red".into(),
                ))
            }
        };
        Scenario::new(
            self.capacity_bps,
            self.packet_bytes,
            self.overhead_bytes,
            self.params.prop_delay,
            self.params.buffer_delay,
            self.params.n_users,
            self.params.w_max,
            loss,
            self.run.clone(),
        )
    }
}

fn parse_num<S: Scalar>(line: usize, key: &str, raw: &str) -> Result<S> {
    let v: f64 = raw.parse().map_err(|_| Error::ScenarioParse {
        line,
        msg: format!("value for {key} is not a number: {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::ScenarioParse {
            line,
            msg: format!("value for {key} must be finite"),
        });
    }
    Ok(S::of(v))
}

fn parse_int(line: usize, key: &str, raw: &str) -> Result<u64> {
    raw.parse().map_err(|_| Error::ScenarioParse {
        line,
        msg: format!("value for {key} is not an integer: {raw:?}"),
    })
}

/// Parse a scenario from text. Unknown keys, duplicates, missing required
/// keys, and keys inconsistent with the chosen loss model are errors.
pub fn parse_scenario<S: Scalar>(text: &str) -> Result<Scenario<S>> {
    const KNOWN: &[&str] = &[
        "capacity_bps",
        "packet_bytes",
        "overhead_bytes",
        "prop_delay_s",
        "buffer_delay_s",
        "n_users",
        "w_max",
        "loss_model",
        "red.min_th_s",
        "red.max_th_s",
        "red.p_max",
        "red.w_q",
        "constant.k",
        "run.t_end_s",
        "run.output_dt_s",
        "run.seed",
        "run.grid_cells",
        "run.courant",
    ];
    let mut kv: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw_line.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or(Error::ScenarioParse {
            line,
            msg: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let known = KNOWN.iter().find(|k| **k == key).copied();
        let key = known.ok_or_else(|| Error::ScenarioParse {
            line,
            msg: format!("unknown key {key:?}"),
        })?;
        if kv.insert(key, (line, value)).is_some() {
            return Err(Error::ScenarioParse {
                line,
                msg: format!("duplicate key {key:?}"),
            });
        }
    }

    let mut take = |key: &str| kv.remove(key);
    let mut required = |key: &'static str| {
        take(key).ok_or(Error::ScenarioParse {
            line: 0,
            msg: format!("missing required key {key:?}"),
        })
    };

    let (l, v) = required("capacity_bps")?;
    let capacity_bps: S = parse_num(l, "capacity_bps", v)?;
    let (l, v) = required("packet_bytes")?;
    let packet_bytes: S = parse_num(l, "packet_bytes", v)?;
    let (l, v) = required("overhead_bytes")?;
    let overhead_bytes: S = parse_num(l, "overhead_bytes", v)?;
    let (l, v) = required("prop_delay_s")?;
    let prop_delay: S = parse_num(l, "prop_delay_s", v)?;
    let (l, v) = required("buffer_delay_s")?;
    let buffer_delay: S = parse_num(l, "buffer_delay_s", v)?;
    let (l, v) = required("n_users")?;
    let n_users = parse_int(l, "n_users", v)? as u32;
    let (l, v) = required("w_max")?;
    let w_max: S = parse_num(l, "w_max", v)?;
    let (model_line, model) = required("loss_model")?;

    let loss = match model {
        "red" => {
            let (l, v) = required("red.min_th_s")?;
            let min_th: S = parse_num(l, "red.min_th_s", v)?;
            let (l, v) = required("red.max_th_s")?;
            let max_th: S = parse_num(l, "red.max_th_s", v)?;
            let (l, v) = required("red.p_max")?;
            let p_max: S = parse_num(l, "red.p_max", v)?;
            let w_q: S = match take("red.w_q") {
                Some((l, v)) => parse_num(l, "red.w_q", v)?,
                None => S::one(),
            };
            let averaging = if w_q < S::one() {
                RedAveraging::Ewma
            } else {
                RedAveraging::Instantaneous
            };
            LossModel::Red {
                config: RedConfig {
                    min_th,
                    max_th,
                    p_max,
                    w_q,
                },
                averaging,
            }
        }
        "droptail" => LossModel::DropTail,
        "constant" => {
            let (l, v) = required("constant.k")?;
            LossModel::ConstantLoss {
                k: parse_num(l, "constant.k", v)?,
            }
        }
        other => {
            return Err(Error::ScenarioParse {
                line: model_line,
                msg: format!("loss_model must be red, droptail, or constant (got {other:?})"),
            })
        }
    };

    let run = RunControls {
        t_end: match take("run.t_end_s") {
            Some((l, v)) => Some(parse_num(l, "run.t_end_s", v)?),
            None => None,
        },
        output_dt: match take("run.output_dt_s") {
            Some((l, v)) => Some(parse_num(l, "run.output_dt_s", v)?),
            None => None,
        },
        seed: match take("run.seed") {
            Some((l, v)) => Some(parse_int(l, "run.seed", v)?),
            None => None,
        },
        grid_cells: match take("run.grid_cells") {
            Some((l, v)) => Some(parse_int(l, "run.grid_cells", v)? as usize),
            None => None,
        },
        courant: match take("run.courant") {
            Some((l, v)) => Some(parse_num(l, "run.courant", v)?),
            None => None,
        },
    };

    if let Some((line, _)) = kv.values().next() {
        let keys: Vec<&str> = kv.keys().copied().collect();
        return Err(Error::ScenarioParse {
            line: *line,
            msg: format!("keys not valid for loss_model = {model}: {keys:?}"),
        });
    }

    Scenario::new(
        capacity_bps,
        packet_bytes,
        overhead_bytes,
        prop_delay,
        buffer_delay,
        n_users,
        w_max,
        loss,
        run,
    )
}

/// Emit a scenario as canonical `key = value` text; `parse_scenario` of the
/// result reproduces the scenario exactly (floats print shortest-roundtrip).
pub fn emit_scenario<S: Scalar>(sc: &Scenario<S>) -> String {
    let mut out = String::new();
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push("capacity_bps", format!("{}", sc.capacity_bps.as_f64()));
    push("packet_bytes", format!("{}", sc.packet_bytes.as_f64()));
    push("overhead_bytes", format!("{}", sc.overhead_bytes.as_f64()));
    push("prop_delay_s", format!("{}", sc.params.prop_delay.as_f64()));
    push(
        "buffer_delay_s",
        format!("{}", sc.params.buffer_delay.as_f64()),
    );
    push("n_users", format!("{}", sc.params.n_users));
    push("w_max", format!("{}", sc.params.w_max.as_f64()));
    match &sc.loss {
        LossModel::Red { config, .. } => {
            push("loss_model", "red".into());
            push("red.min_th_s", format!("{}", config.min_th.as_f64()));
            push("red.max_th_s", format!("{}", config.max_th.as_f64()));
            push("red.p_max", format!("{}", config.p_max.as_f64()));
            push("red.w_q", format!("{}", config.w_q.as_f64()));
        }
        LossModel::DropTail => push("loss_model", "droptail".into()),
        LossModel::ConstantLoss { k } => {
            push("loss_model", "constant".into());
            push("constant.k", format!("{}", k.as_f64()));
        }
    }
    if let Some(v) = sc.run.t_end {
        push("run.t_end_s", format!("{}", v.as_f64()));
    }
    if let Some(v) = sc.run.output_dt {
        push("run.output_dt_s", format!("{}", v.as_f64()));
    }
    if let Some(v) = sc.run.seed {
        push("run.seed", format!("{v}"));
    }
    if let Some(v) = sc.run.grid_cells {
        push("run.grid_cells", format!("{v}"));
    }
    if let Some(v) = sc.run.courant {
        push("run.courant", format!("{}", v.as_f64()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const ISP: &str = "\
# reference bottleneck
capacity_bps = 1e9
packet_bytes = 1024
overhead_bytes = 40
prop_delay_s = 0.010
buffer_delay_s = 0.002
n_users = 50
w_max = 64
loss_model = red
red.min_th_s = 0.0004
red.max_th_s = 0.002
red.p_max = 0.005
red.w_q = 1
";

    #[test]
    fn parses_reference_scenario() {
        let sc: Scenario<f64> = parse_scenario(ISP).unwrap();
        assert_eq!(sc.params.n_users, 50);
        assert!((sc.params.capacity_per_user - 2349.624).abs() < 1e-2);
        match &sc.loss {
            LossModel::Red { config, averaging } => {
                assert_eq!(*averaging, RedAveraging::Instantaneous);
                assert!((config.slope() - 3.125).abs() < 1e-12);
            }
            other => panic!("expected RED, got {other:?}"),
        }
    }

    #[test]
    fn round_trips() {
        let sc: Scenario<f64> = parse_scenario(ISP).unwrap();
        let text = emit_scenario(&sc);
        let again: Scenario<f64> = parse_scenario(&text).unwrap();
        assert_eq!(sc, again);
    }

    #[test]
    fn ewma_detection_and_droptail() {
        let text = ISP.replace("red.w_q = 1", "red.w_q = 0.002");
        let sc: Scenario<f64> = parse_scenario(&text).unwrap();
        match &sc.loss {
            LossModel::Red { averaging, .. } => assert_eq!(*averaging, RedAveraging::Ewma),
            _ => panic!(),
        }
        let text = "capacity_bps=1e9\npacket_bytes=1024\noverhead_bytes=40\n\
                    prop_delay_s=0.01\nbuffer_delay_s=0.002\nn_users=35\nw_max=64\n\
                    loss_model=droptail\n";
        let sc: Scenario<f64> = parse_scenario(text).unwrap();
        assert_eq!(sc.loss, LossModel::DropTail);
        let roundtrip = parse_scenario::<f64>(&emit_scenario(&sc)).unwrap();
        assert_eq!(sc, roundtrip);
    }

    #[test]
    fn rejects_malformed_input() {
        // Unknown key.
        let bad = format!("{ISP}bogus_key = 3\n");
        assert!(matches!(
            parse_scenario::<f64>(&bad),
            Err(Error::ScenarioParse { .. })
        ));
        // Duplicate.
        let bad = format!("{ISP}n_users = 51\n");
        assert!(parse_scenario::<f64>(&bad).is_err());
        // Missing required key.
        let bad = ISP.replace("n_users = 50\n", "");
        assert!(parse_scenario::<f64>(&bad).is_err());
        // red.* keys without RED.
        let bad = ISP.replace("loss_model = red", "loss_model = droptail");
        assert!(parse_scenario::<f64>(&bad).is_err());
        // Not a number.
        let bad = ISP.replace("w_max = 64", "w_max = sixty-four");
        assert!(parse_scenario::<f64>(&bad).is_err());
        // Bad loss model.
        let bad = ISP.replace("loss_model = red", "loss_model = codel");
        assert!(parse_scenario::<f64>(&bad).is_err());
    }

    #[test]
    fn run_controls_round_trip() {
        let text = format!("{ISP}run.t_end_s = 12.5\nrun.seed = 42\nrun.grid_cells = 512\n");
        let sc: Scenario<f64> = parse_scenario(&text).unwrap();
        assert_eq!(sc.run.t_end, Some(12.5));
        assert_eq!(sc.run.seed, Some(42));
        assert_eq!(sc.run.grid_cells, Some(512));
        assert_eq!(sc.run.courant, None);
        let again = parse_scenario::<f64>(&emit_scenario(&sc)).unwrap();
        assert_eq!(sc, again);
    }
}
