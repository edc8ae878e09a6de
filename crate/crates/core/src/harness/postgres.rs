use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{EvalResult, Harness, Outcome, PlanSource};
use crate::catalog::{KnobCatalog, KnobKind, KnobValue, Unit};
use crate::error::{Error, Result};
use crate::quantity::render_native;
use crate::selector::Objective;
use crate::space::PhysicalConfig;
use crate::util::write_atomic;

pub const MARKER_BEGIN: &str = "# BEGIN knobtune managed block";
pub const MARKER_END: &str = "# END knobtune managed block";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostgresConfig {
    /// `postgresql.conf` (or an included file) that receives the settings.
    pub conf_path: PathBuf,
    /// Shell command restarting the server; must exit 0 once it accepts
    /// connections.
    pub restart_command: String,
    /// Shell command running the workload. The metric is the last number it
    /// prints, or the last number in `results_file` when that is set.
    pub benchmark_command: String,
    #[serde(default)]
    pub results_file: Option<PathBuf>,
    /// Shell command that reads SQL on stdin and prints the result, used for
    /// `EXPLAIN (FORMAT JSON)`.
    #[serde(default = "default_plan_command")]
    pub plan_command: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_restart_timeout")]
    pub restart_timeout_secs: u64,
}

fn default_plan_command() -> String {
    "psql -X -A -t -q".into()
}

fn default_timeout() -> u64 {
    300
}

fn default_restart_timeout() -> u64 {
    120
}

/// Live PostgreSQL backend driven by shell commands.
pub struct PostgresHarness {
    pub config: PostgresConfig,
    pub objective: Objective,
    units: BTreeMap<String, (Unit, bool)>,
    backed_up: bool,
}

/// The last numeric token in `text`.
pub fn parse_metric(text: &str) -> Option<f64> {
    text.split(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '=' | ':' | '(' | ')' | '[' | ']'))
        .rev()
        .find_map(|tok| tok.parse::<f64>().ok().filter(|v| v.is_finite()))
}

fn quote(value: &str) -> String {
    format!("'{}'", value.replace('\'', "''"))
}

/// `name = 'value'` lines with values in PostgreSQL unit syntax.
pub fn render_assignments(config: &PhysicalConfig, units: &BTreeMap<String, (Unit, bool)>) -> Vec<String> {
    config
        .iter()
        .map(|(name, value)| {
            let rendered = match value {
                KnobValue::Number(x) => {
                    let (unit, integer) = units.get(name).copied().unwrap_or((Unit::None, false));
                    render_native(*x, unit, integer)
                }
                KnobValue::Text(t) => t.clone(),
            };
            format!("{name} = {}", quote(&rendered))
        })
        .collect()
}

/// Replaces (or appends) the managed block in `original`.
fn with_block(original: &str, lines: &[String]) -> String {
    let mut out = String::new();
    let mut inside = false;
    for line in original.lines() {
        match line.trim() {
            MARKER_BEGIN => inside = true,
            MARKER_END if inside => inside = false,
            _ if !inside => {
                out.push_str(line);
                out.push('\n');
            }
            _ => {}
        }
    }
    out.push_str(MARKER_BEGIN);
    out.push('\n');
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    out.push_str(MARKER_END);
    out.push('\n');
    out
}

struct Finished {
    status: Option<std::process::ExitStatus>,
    stdout: String,
    stderr: String,
    elapsed: Duration,
}

fn spawn_shell(command: &str, stdin: bool) -> Result<Child> {
    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(command)
        .stdin(if stdin { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    cmd.spawn()
        .map_err(|e| Error::Harness(format!("cannot run {command:?}: {e}")))
}

fn kill_tree(child: &mut Child) {
    #[cfg(unix)]
    {
        let _ = Command::new("kill")
            .args(["-s", "KILL", "--"])
            .arg(format!("-{}", child.id()))
            .stderr(Stdio::null())
            .status();
    }
    let _ = child.kill();
}

/// Runs `command` under `sh -c`, killing its process group after `timeout`.
/// `status` is `None` on timeout.
fn run_with_timeout(command: &str, input: Option<&str>, timeout: Duration) -> Result<Finished> {
    let start = Instant::now();
    let mut child = spawn_shell(command, input.is_some())?;
    if let (Some(text), Some(mut pipe)) = (input, child.stdin.take()) {
        let _ = pipe.write_all(text.as_bytes());
    }
    let drain = |pipe: Option<Box<dyn Read + Send>>| {
        std::thread::spawn(move || {
            let mut s = String::new();
            if let Some(mut p) = pipe {
                let _ = p.read_to_string(&mut s);
            }
            s
        })
    };
    let out = drain(child.stdout.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
    let err = drain(child.stderr.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if start.elapsed() >= timeout => {
                kill_tree(&mut child);
                let _ = child.wait();
                break None;
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(20)),
            Err(e) => return Err(Error::Harness(format!("waiting for {command:?}: {e}"))),
        }
    };
    Ok(Finished {
        status,
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        elapsed: start.elapsed(),
    })
}

impl PostgresHarness {
    pub fn new(config: PostgresConfig, catalog: &KnobCatalog, objective: Objective) -> Self {
        let units = catalog
            .knobs
            .values()
            .map(|k| (k.name.clone(), (k.unit, k.kind == KnobKind::Integer)))
            .collect();
        PostgresHarness {
            config,
            objective,
            units,
            backed_up: false,
        }
    }

    fn backup_path(&self) -> PathBuf {
        let mut p = self.config.conf_path.as_os_str().to_owned();
        p.push(".knobtune.bak");
        PathBuf::from(p)
    }

    /// Rewrites the managed block of the configuration file atomically. The
    /// original file is copied aside on the first call of a session. An
    /// empty configuration empties the block, restoring defaults.
    pub fn apply_config(&mut self, config: &PhysicalConfig) -> Result<()> {
        let path = &self.config.conf_path;
        let original = match std::fs::read_to_string(path) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(path, e)),
        };
        if !self.backed_up {
            write_atomic(&self.backup_path(), original.as_bytes())?;
            self.backed_up = true;
        }
        let text = with_block(&original, &render_assignments(config, &self.units));
        write_atomic(path, text.as_bytes())
    }

    /// Settings currently in the managed block, as raw strings.
    pub fn read_managed_block(path: &Path) -> Result<BTreeMap<String, String>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut out = BTreeMap::new();
        let mut inside = false;
        for line in text.lines() {
            match line.trim() {
                MARKER_BEGIN => inside = true,
                MARKER_END => inside = false,
                l if inside => {
                    if let Some((k, v)) = l.split_once('=') {
                        let v = v.trim();
                        let v = v.strip_prefix('\'').and_then(|v| v.strip_suffix('\'')).unwrap_or(v);
                        out.insert(k.trim().to_string(), v.replace("''", "'"));
                    }
                }
                _ => {}
            }
        }
        Ok(out)
    }
}

impl PlanSource for PostgresHarness {
    fn get_plan(&self, query: &str) -> Result<String> {
        let sql = format!("EXPLAIN (FORMAT JSON) {}", query.trim().trim_end_matches(';'));
        let run = run_with_timeout(
            &self.config.plan_command,
            Some(&format!("{sql};\n")),
            Duration::from_secs(self.config.timeout_secs),
        )?;
        match run.status {
            Some(s) if s.success() && run.stderr.trim().is_empty() => Ok(run.stdout.trim().to_string()),
            Some(_) => Err(Error::Harness(format!("EXPLAIN failed: {}", run.stderr.trim()))),
            None => Err(Error::Harness("EXPLAIN timed out".into())),
        }
    }
}

impl Harness for PostgresHarness {
    fn objective(&self) -> Objective {
        self.objective
    }

    fn evaluate(&mut self, config: &PhysicalConfig) -> Result<EvalResult> {
        let start = Instant::now();
        self.apply_config(config)?;
        let ms = |start: Instant| start.elapsed().as_millis() as u64;
        let restart = run_with_timeout(
            &self.config.restart_command,
            None,
            Duration::from_secs(self.config.restart_timeout_secs),
        )?;
        if !restart.status.is_some_and(|s| s.success()) {
            log::warn!("server failed to start: {}", restart.stderr.trim());
            return Ok(EvalResult::failed(Outcome::Crash, ms(start)));
        }
        let bench = run_with_timeout(
            &self.config.benchmark_command,
            None,
            Duration::from_secs(self.config.timeout_secs),
        )?;
        log::debug!("benchmark finished in {:?}", bench.elapsed);
        let Some(status) = bench.status else {
            log::warn!("benchmark exceeded {} s", self.config.timeout_secs);
            return Ok(EvalResult::failed(Outcome::Timeout, ms(start)));
        };
        if !status.success() {
            log::warn!("benchmark failed: {}", bench.stderr.trim());
            return Ok(EvalResult::failed(Outcome::Crash, ms(start)));
        }
        let source = match &self.config.results_file {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => bench.stdout,
        };
        match parse_metric(&source) {
            Some(v) => Ok(EvalResult::ok(v, ms(start))),
            None => {
                log::warn!("benchmark output has no metric");
                Ok(EvalResult::failed(Outcome::Crash, ms(start)))
            }
        }
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::catalog::{load_system_view, DiskKind, SystemProfile};
    use crate::quantity::resolve_quantity;

    const VIEW: &str = "name\tvartype\tmin_val\tmax_val\tboot_val\tunit\tenumvals\n\
        shared_buffers\tinteger\t16\t1073741823\t16384\t8kB\t\\N\n\
        checkpoint_timeout\tinteger\t30\t86400\t300\ts\t\\N\n\
        random_page_cost\treal\t0\t1.79769e+308\t4\t\\N\t\\N\n\
        wal_level\tenum\t\\N\t\\N\treplica\t\\N\t{minimal,replica,logical}\n";

    fn catalog() -> KnobCatalog {
        load_system_view(VIEW, SystemProfile::new(16 << 30, DiskKind::Ssd, 8).unwrap()).unwrap()
    }

    fn harness(dir: &Path, restart: &str, bench: &str, timeout: u64) -> PostgresHarness {
        let config = PostgresConfig {
            conf_path: dir.join("postgresql.conf"),
            restart_command: restart.into(),
            benchmark_command: bench.into(),
            results_file: None,
            plan_command: "cat".into(),
            timeout_secs: timeout,
            restart_timeout_secs: 5,
        };
        PostgresHarness::new(config, &catalog(), Objective::Latency)
    }

    fn config() -> PhysicalConfig {
        PhysicalConfig::from([
            ("shared_buffers".to_string(), KnobValue::Number(4.0 * 1073741824.0)),
            ("checkpoint_timeout".to_string(), KnobValue::Number(90_000.0)),
            ("random_page_cost".to_string(), KnobValue::Number(1.1)),
            ("wal_level".to_string(), KnobValue::Text("minimal".into())),
        ])
    }

    #[test]
    fn managed_block_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("postgresql.conf");
        std::fs::write(&conf, "listen_addresses = '*'\n").unwrap();
        let mut h = harness(dir.path(), "true", "echo 1", 5);
        h.apply_config(&config()).unwrap();
        h.apply_config(&config()).unwrap();
        let text = std::fs::read_to_string(&conf).unwrap();
        assert_eq!(text.matches(MARKER_BEGIN).count(), 1);
        assert!(text.starts_with("listen_addresses = '*'\n"));
        let block = PostgresHarness::read_managed_block(&conf).unwrap();
        assert_eq!(block["shared_buffers"], "4GB");
        assert_eq!(block["checkpoint_timeout"], "90s");
        assert_eq!(block["wal_level"], "minimal");
        // Reading the values back through the unit parser gives the canonical numbers.
        let p = catalog().profile;
        assert_eq!(resolve_quantity(&block["shared_buffers"], &p, Unit::Bytes).unwrap(), 4.0 * 1073741824.0);
        assert_eq!(resolve_quantity(&block["checkpoint_timeout"], &p, Unit::Milliseconds).unwrap(), 90_000.0);
        assert_eq!(resolve_quantity(&block["random_page_cost"], &p, Unit::None).unwrap(), 1.1);
        // The backup holds the file as it was before the session.
        let backup = std::fs::read_to_string(dir.path().join("postgresql.conf.knobtune.bak")).unwrap();
        assert_eq!(backup, "listen_addresses = '*'\n");

        h.apply_config(&PhysicalConfig::new()).unwrap();
        assert!(PostgresHarness::read_managed_block(&conf).unwrap().is_empty());
    }

    #[test]
    fn sixty_knob_block() {
        let dir = tempfile::tempdir().unwrap();
        let mut h = harness(dir.path(), "true", "echo 1", 5);
        let cfg: PhysicalConfig = (0..60).map(|i| (format!("knob_{i:02}"), KnobValue::Number(i as f64))).collect();
        h.apply_config(&cfg).unwrap();
        let block = PostgresHarness::read_managed_block(&dir.path().join("postgresql.conf")).unwrap();
        assert_eq!(block.len(), 60);
        assert_eq!(block["knob_07"], "7");
    }

    #[test]
    fn evaluate_outcomes() {
        let dir = tempfile::tempdir().unwrap();
        let ok = harness(dir.path(), "true", "echo 'latency p95 (ms): 812.5'", 5).evaluate(&config()).unwrap();
        assert_eq!(ok.outcome, Outcome::Ok);
        assert_eq!(ok.objective_raw, Some(812.5));
        let crash = harness(dir.path(), "exit 1", "echo 1", 5).evaluate(&config()).unwrap();
        assert_eq!(crash.outcome, Outcome::Crash);
        let timeout = harness(dir.path(), "true", "sleep 5; echo 1", 1).evaluate(&config()).unwrap();
        assert_eq!(timeout.outcome, Outcome::Timeout);
        assert!(timeout.wall_ms < 4000);
        let nometric = harness(dir.path(), "true", "echo done", 5).evaluate(&config()).unwrap();
        assert_eq!(nometric.outcome, Outcome::Crash);
    }

    #[test]
    fn plan_via_command() {
        let dir = tempfile::tempdir().unwrap();
        let h = harness(dir.path(), "true", "true", 5);
        assert_eq!(h.get_plan("SELECT 1;").unwrap(), "EXPLAIN (FORMAT JSON) SELECT 1;");
        let mut bad = harness(dir.path(), "true", "true", 5);
        bad.config.plan_command = "echo 'ERROR: syntax error' >&2; exit 1".into();
        assert!(bad.get_plan("SELEC 1").unwrap_err().to_string().contains("syntax error"));
    }

    #[test]
    fn metric_parsing() {
        assert_eq!(parse_metric("tps = 240.5 (without initial connection time)\n"), Some(240.5));
        assert_eq!(parse_metric("latency: 12 ms\np95=800"), Some(800.0));
        assert_eq!(parse_metric("no numbers"), None);
    }
}
