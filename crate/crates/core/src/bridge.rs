//! Client side of the out-of-process synthesizer protocol.
//!
//! The harness talks to a child process over its standard streams, one
//! JSON object per line. Requests are `{id, cmd, payload}` and every request
//! gets exactly one response `{id, ok, payload}` or `{id, ok: false, error}`.
//! The first request is a `handshake` declaring [`PROTOCOL_VERSION`];
//! then `prepare_fit`, any number of `train_step`, `sample` and finally
//! `shutdown`. Tables cross the boundary as CSV file paths.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;
use crate::dataset::{load_csv_like, Table};
use crate::error::{Error, Result};
use crate::generators::{FitState, StepOutcome, Synthesizer};

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub cmd: String,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    /// Null when the request could not be parsed.
    pub id: Option<u64>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn success(id: u64, payload: Value) -> Response {
        Response { id: Some(id), ok: true, payload: Some(payload), error: None }
    }

    pub fn failure(id: Option<u64>, error: impl Into<String>) -> Response {
        Response { id, ok: false, payload: None, error: Some(error.into()) }
    }
}

/// Sequential request/response channel over a pair of byte streams.
pub struct BridgeClient<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
}

impl<R: BufRead, W: Write> BridgeClient<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        BridgeClient { reader, writer, next_id: 0 }
    }

    fn read_response(&mut self) -> Result<Response> {
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|e| Error::Bridge(format!("reading response: {e}")))?;
        if n == 0 {
            return Err(Error::Bridge("the model process closed its output".into()));
        }
        serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Bridge(format!("malformed response `{}`: {e}", line.trim_end())))
    }

    /// Writes one raw line and reads the reply without checking its id.
    pub fn send_raw(&mut self, line: &str) -> Result<Response> {
        writeln!(self.writer, "{line}")
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Bridge(format!("writing request: {e}")))?;
        self.read_response()
    }

    /// Sends a request and checks that the reply echoes its id.
    pub fn request(&mut self, cmd: &str, payload: Value) -> Result<Response> {
        let id = self.next_id;
        self.next_id += 1;
        let line = serde_json::to_string(&Request { id, cmd: cmd.into(), payload })?;
        let resp = self.send_raw(&line)?;
        if resp.id != Some(id) {
            return Err(Error::Bridge(format!(
                "response to request {id} carries id {:?}",
                resp.id
            )));
        }
        Ok(resp)
    }

    /// Like [`request`](Self::request) but turns `ok: false` into an error.
    pub fn call(&mut self, cmd: &str, payload: Value) -> Result<Value> {
        let resp = self.request(cmd, payload)?;
        if resp.ok {
            Ok(resp.payload.unwrap_or(Value::Null))
        } else {
            Err(Error::Bridge(format!(
                "`{cmd}` failed: {}",
                resp.error.unwrap_or_else(|| "no error text".into())
            )))
        }
    }

    pub fn handshake(&mut self) -> Result<()> {
        let p = self.call("handshake", json!({ "protocol_version": PROTOCOL_VERSION }))?;
        match p.get("protocol_version").and_then(Value::as_u64) {
            Some(PROTOCOL_VERSION) => Ok(()),
            other => Err(Error::Bridge(format!(
                "model speaks protocol version {other:?}, expected {PROTOCOL_VERSION}"
            ))),
        }
    }

    pub fn prepare_fit(&mut self, config: &Config, train_csv: &Path, schema: &Path, seed: u64) -> Result<()> {
        self.call(
            "prepare_fit",
            json!({ "config": config, "train_csv": train_csv, "schema": schema, "seed": seed }),
        )?;
        Ok(())
    }

    /// Returns `(step_index, early_stop)`.
    pub fn train_step(&mut self) -> Result<(u64, bool)> {
        let p = self.call("train_step", json!({}))?;
        let idx = p
            .get("step_index")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Bridge(format!("train_step reply lacks step_index: {p}")))?;
        let stop = p.get("early_stop").and_then(Value::as_bool).unwrap_or(false);
        Ok((idx, stop))
    }

    /// Returns the path of the CSV the model wrote.
    pub fn sample(&mut self, n: usize, seed: u64) -> Result<PathBuf> {
        let p = self.call("sample", json!({ "n": n, "seed": seed }))?;
        p.get("path")
            .and_then(Value::as_str)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Bridge(format!("sample reply lacks path: {p}")))
    }

    pub fn shutdown(&mut self) -> Result<()> {
        self.call("shutdown", json!({}))?;
        Ok(())
    }
}

/// A model served by a child process. The command line is split on
/// whitespace; the first word is the program.
#[derive(Debug, Clone)]
pub struct BridgeSynthesizer {
    program: String,
    args: Vec<String>,
}

impl BridgeSynthesizer {
    pub fn from_command_line(cmd: &str) -> Result<BridgeSynthesizer> {
        let mut words = cmd.split_whitespace().map(String::from);
        let program = words
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty bridge command".into()))?;
        Ok(BridgeSynthesizer { program, args: words.collect() })
    }
}

type ChildClient = BridgeClient<BufReader<ChildStdout>, ChildStdin>;

struct BridgeState {
    client: Option<ChildClient>,
    child: Child,
    _dir: tempfile::TempDir,
    template: Table,
    last_step: u64,
}

impl BridgeState {
    fn client(&mut self) -> &mut ChildClient {
        self.client.as_mut().expect("client lives until drop")
    }
}

impl FitState for BridgeState {
    fn train_step(&mut self) -> Result<StepOutcome> {
        let (idx, early_stop) = self.client().train_step()?;
        if idx <= self.last_step && self.last_step > 0 {
            return Err(Error::Bridge(format!(
                "step index {idx} does not follow {}",
                self.last_step
            )));
        }
        self.last_step = idx;
        Ok(StepOutcome { early_stop })
    }

    fn sample(&mut self, n: usize, seed: u64) -> Result<Table> {
        let path = self.client().sample(n, seed)?;
        load_csv_like(&path, &self.template)
    }
}

impl Drop for BridgeState {
    fn drop(&mut self) {
        if let Some(mut c) = self.client.take() {
            if c.shutdown().is_err() {
                let _ = self.child.kill();
            }
        }
        let _ = self.child.wait();
    }
}

impl Synthesizer for BridgeSynthesizer {
    fn name(&self) -> String {
        let mut s = format!("bridge:{}", self.program);
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s
    }

    fn prepare_fit(&self, config: &Config, train: &Table, seed: u64) -> Result<Box<dyn FitState>> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let train_csv = dir.path().join("train.csv");
        let schema = dir.path().join("train.schema.toml");
        train.write_csv(&train_csv)?;
        train.write_schema(&schema)?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .current_dir(dir.path())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(&self.program, e))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let mut state = BridgeState {
            client: Some(BridgeClient::new(BufReader::new(stdout), stdin)),
            child,
            _dir: dir,
            template: train.take(&[0]),
            last_step: 0,
        };
        state.client().handshake()?;
        state.client().prepare_fit(config, &train_csv, &schema, seed)?;
        Ok(Box::new(state))
    }
}

/// A reference model that answers the protocol by resampling its training
/// rows. Serves until `shutdown` or end of input.
pub fn serve_passthrough<R: BufRead, W: Write>(mut reader: R, mut writer: W) -> Result<()> {
    let mut train: Option<(Table, PathBuf)> = None;
    let mut steps = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Error::io("<stdin>", e))? == 0 {
            return Ok(());
        }
        let (resp, quit) = match serde_json::from_str::<Request>(line.trim_end()) {
            Err(e) => (Response::failure(None, format!("malformed request: {e}")), false),
            Ok(req) => {
                let quit = req.cmd == "shutdown";
                let out = passthrough_handle(&req, &mut train, &mut steps);
                let resp = match out {
                    Ok(p) => Response::success(req.id, p),
                    Err(e) => Response::failure(Some(req.id), e.to_string()),
                };
                (resp, quit)
            }
        };
        let text = serde_json::to_string(&resp)?;
        writeln!(writer, "{text}")
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io("<stdout>", e))?;
        if quit {
            return Ok(());
        }
    }
}

fn passthrough_handle(req: &Request, train: &mut Option<(Table, PathBuf)>, steps: &mut u64) -> Result<Value> {
    let field = |k: &str| {
        req.payload
            .get(k)
            .cloned()
            .ok_or_else(|| Error::Bridge(format!("`{}` payload lacks `{k}`", req.cmd)))
    };
    match req.cmd.as_str() {
        "handshake" => match field("protocol_version")?.as_u64() {
            Some(PROTOCOL_VERSION) => Ok(json!({ "protocol_version": PROTOCOL_VERSION })),
            v => Err(Error::Bridge(format!("unsupported protocol version {v:?}"))),
        },
        "prepare_fit" => {
            let csv: PathBuf = serde_json::from_value(field("train_csv")?)?;
            let schema: PathBuf = serde_json::from_value(field("schema")?)?;
            let table = crate::dataset::load_csv(&csv, &schema)?;
            let dir = csv.parent().map(Path::to_path_buf).unwrap_or_default();
            *train = Some((table, dir));
            *steps = 0;
            Ok(json!({}))
        }
        "train_step" | "sample" if train.is_none() => {
            Err(Error::Bridge(format!("`{}` before prepare_fit", req.cmd)))
        }
        "train_step" => {
            *steps += 1;
            Ok(json!({ "step_index": *steps, "early_stop": true }))
        }
        "sample" => {
            let (table, dir) = train.as_ref().expect("checked above");
            let n = field("n")?
                .as_u64()
                .ok_or_else(|| Error::Bridge("`n` must be a count".into()))? as usize;
            let seed = field("seed")?.as_u64().unwrap_or(0);
            let out = crate::generators::traincopy_sample(table, n, seed)?;
            let path = dir.join(format!("sample_{}.csv", req.id));
            out.write_csv(&path)?;
            Ok(json!({ "path": path }))
        }
        "shutdown" => Ok(json!({})),
        other => Err(Error::Bridge(format!("unknown command `{other}`"))),
    }
}

/// Outcome of one protocol conformance check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Drives an adapter through the protocol state machine: handshake,
/// out-of-order and malformed requests, fitting, step numbering, sample
/// schema and shutdown. `workdir` receives the training files.
pub fn run_conformance<R: BufRead, W: Write>(
    client: &mut BridgeClient<R, W>,
    train: &Table,
    workdir: &Path,
) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut record = |name: &'static str, r: Result<()>| {
        checks.push(Check {
            name,
            passed: r.is_ok(),
            detail: r.err().map(|e| e.to_string()).unwrap_or_default(),
        })
    };
    let expect_failure = |r: Result<Response>| -> Result<()> {
        match r? {
            Response { ok: false, .. } => Ok(()),
            other => Err(Error::Bridge(format!("expected a failure, got {other:?}"))),
        }
    };

    record("handshake", client.handshake());
    record(
        "sample before prepare_fit is refused",
        expect_failure(client.request("sample", json!({ "n": 1, "seed": 0 }))),
    );
    record(
        "malformed request is refused",
        client.send_raw("{not json").and_then(|r| match r {
            Response { ok: false, id: None, .. } => Ok(()),
            other => Err(Error::Bridge(format!("expected an id-less failure, got {other:?}"))),
        }),
    );
    record(
        "unknown command is refused",
        expect_failure(client.request("dance", json!({}))),
    );
    let csv = workdir.join("conformance_train.csv");
    let schema = workdir.join("conformance_train.schema.toml");
    let fitted = train
        .write_csv(&csv)
        .and_then(|_| train.write_schema(&schema))
        .and_then(|_| client.prepare_fit(&Config::new(), &csv, &schema, 0));
    let fitted_ok = fitted.is_ok();
    record("prepare_fit", fitted);
    if fitted_ok {
        let steps: Result<()> = (|| {
            let mut last = 0;
            for _ in 0..3 {
                let (idx, _) = client.train_step()?;
                if idx <= last && last > 0 {
                    return Err(Error::Bridge(format!("step {idx} after {last}")));
                }
                last = idx;
            }
            Ok(())
        })();
        record("step indices increase", steps);
        let sampled: Result<()> = (|| {
            let path = client.sample(5, 1)?;
            let t = load_csv_like(&path, train)?;
            if t.n_rows() != 5 {
                return Err(Error::Bridge(format!("asked for 5 rows, got {}", t.n_rows())));
            }
            t.check_same_schema(train)
        })();
        record("sample matches the training schema", sampled);
    }
    record("shutdown", client.shutdown());
    checks
}
