//! External advisor protocol: one JSON request per iteration, one
//! [`PlanInstruction`] back, over a subprocess pipe or HTTP POST.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::Serialize;

use super::policy::{allowed_actions, validate_instruction, Action, PlanInstruction, StageParams};
use super::Mode;
use crate::error::{Error, Result};
use crate::evaluate::{DiagnosticReport, REPORT_SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize)]
pub struct AdvisorRequest<'a> {
    pub schema_version: u32,
    pub iteration: usize,
    pub report: &'a DiagnosticReport,
    pub allowed_actions: Vec<&'static str>,
    pub artifact_paths: Vec<String>,
}

impl<'a> AdvisorRequest<'a> {
    pub fn new(report: &'a DiagnosticReport, mode: Mode) -> Self {
        let artifact_paths = [&report.phase_portrait_path, &report.trajectory_plot_path, &report.model_path]
            .into_iter()
            .flatten()
            .cloned()
            .collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            iteration: report.iteration,
            report,
            allowed_actions: allowed_actions(mode).into_iter().map(Action::as_str).collect(),
            artifact_paths,
        }
    }
}

fn run_subprocess(command: &str, request: String, timeout: Duration) -> Result<String> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| Error::io(format!("spawning advisor `{command}`"), e))?;
    let mut stdin = child.stdin.take().expect("piped");
    let mut stdout = child.stdout.take().expect("piped");
    std::thread::spawn(move || {
        let _ = stdin.write_all(request.as_bytes());
    });
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut out = String::new();
        let r = stdout.read_to_string(&mut out).map(|_| out);
        let _ = tx.send(r);
    });
    match rx.recv_timeout(timeout) {
        Ok(out) => {
            let _ = child.wait();
            out.map_err(|e| Error::io("reading advisor output", e))
        }
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            Err(Error::Config(format!("advisor timed out after {:.1} s", timeout.as_secs_f64())))
        }
    }
}

fn run_http(url: &str, request: String, timeout: Duration) -> Result<String> {
    let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
    let mut resp = agent
        .post(url)
        .header("Content-Type", "application/json")
        .send(request)
        .map_err(|e| Error::Config(format!("advisor request to {url} failed: {e}")))?;
    resp.body_mut()
        .read_to_string()
        .map_err(|e| Error::Config(format!("advisor reply from {url} unreadable: {e}")))
}

/// Raw exchange with an endpoint; `http://`/`https://` selects POST,
/// anything else is run as a shell command.
pub fn exchange(endpoint: &str, request_json: &str, timeout: Duration) -> Result<String> {
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        run_http(endpoint, request_json.to_string(), timeout)
    } else {
        run_subprocess(endpoint, request_json.to_string(), timeout)
    }
}

/// Outcome of one consultation, including the log line to record.
#[derive(Debug, Clone)]
pub struct Advice {
    pub instruction: PlanInstruction,
    pub from_advisor: bool,
    pub log: String,
}

/// Asks the advisor; on timeout, transport error, malformed or
/// out-of-schema reply returns `fallback` instead.
pub fn advise_external(
    report: &DiagnosticReport,
    endpoint: &str,
    mode: Mode,
    current: &StageParams,
    has_model: bool,
    timeout: Duration,
    fallback: PlanInstruction,
) -> Advice {
    let request = match serde_json::to_string(&AdvisorRequest::new(report, mode)) {
        Ok(r) => r,
        Err(e) => return fall_back(fallback, report.iteration, "", &format!("request encoding failed: {e}")),
    };
    let reply = match exchange(endpoint, &request, timeout) {
        Ok(r) => r,
        Err(e) => return fall_back(fallback, report.iteration, &request, &e.to_string()),
    };
    let parsed = serde_json::from_str::<PlanInstruction>(reply.trim())
        .map_err(|e| Error::Config(format!("malformed reply: {e}")))
        .and_then(|ins| validate_instruction(&ins, mode, current, has_model).map(|_| ins));
    match parsed {
        Ok(ins) => Advice {
            log: format!("iteration {}\nrequest: {request}\nreply: {}\naccepted\n", report.iteration, reply.trim()),
            instruction: ins,
            from_advisor: true,
        },
        Err(e) => {
            let mut a = fall_back(fallback, report.iteration, &request, &e.to_string());
            a.log = format!("{}reply: {}\n", a.log, reply.trim());
            a
        }
    }
}

fn fall_back(fallback: PlanInstruction, iteration: usize, request: &str, why: &str) -> Advice {
    log::warn!("advisor rejected at iteration {iteration}: {why}; using the rule-based policy");
    Advice {
        log: format!("iteration {iteration}\nrequest: {request}\nfallback: {why}\n"),
        instruction: fallback,
        from_advisor: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::RunConfig;

    fn setup() -> (DiagnosticReport, StageParams, PlanInstruction) {
        let cfg = RunConfig::default();
        let mut r = DiagnosticReport::new(0, "object");
        r.r2 = 0.2;
        (r, StageParams::initial(&cfg), PlanInstruction::accept("fallback"))
    }

    #[test]
    fn echo_advisor_round_trip() {
        let (r, cur, fb) = setup();
        let cmd = r#"cat > /dev/null; echo '{"target":"terminate","action":"accept","rationale":"looks fine"}'"#;
        let a = advise_external(&r, cmd, Mode::Object, &cur, true, Duration::from_secs(10), fb);
        assert!(a.from_advisor, "{}", a.log);
        assert_eq!(a.instruction.rationale, "looks fine");
    }

    #[test]
    fn invalid_action_falls_back() {
        let (r, cur, fb) = setup();
        let cmd = r#"cat > /dev/null; echo '{"target":"equation","action":"delete_everything"}'"#;
        let a = advise_external(&r, cmd, Mode::Object, &cur, true, Duration::from_secs(10), fb.clone());
        assert!(!a.from_advisor);
        assert_eq!(a.instruction, fb);
        assert!(a.log.contains("fallback"));
    }

    #[test]
    fn timeout_falls_back() {
        let (r, cur, fb) = setup();
        let a = advise_external(&r, "sleep 5", Mode::Object, &cur, true, Duration::from_millis(200), fb.clone());
        assert!(!a.from_advisor);
        assert_eq!(a.instruction, fb);
        assert!(a.log.contains("timed out"));
    }

    #[test]
    fn request_lists_mode_actions() {
        let (r, _, _) = setup();
        let v = serde_json::to_value(AdvisorRequest::new(&r, Mode::Object)).unwrap();
        assert_eq!(v["allowed_actions"], serde_json::json!(["adjust_lambda_sp", "adjust_library", "accept"]));
        assert_eq!(v["report"]["r2"], serde_json::json!(0.2));
    }
}
