//! CSV and trace output.

use std::fs;
use std::io;
use std::path::Path;

use crate::engine::RunOutput;
use crate::units::sig9;

pub const MIGRATIONS_HEADER: &str = "scenario,vm,mode,mobility,t_start,t_disk,t_context,rounds,t_precopy,t_downtime,t_redirect,t_total,bytes_total,converged,feasible_warnings";
pub const SESSIONS_HEADER: &str = "scenario,session,vm,n_interruptions,max_interruption_s,dropped";
pub const REQUESTS_HEADER: &str = "scenario,client,content,issued_at,served_by,latency_s";

/// Quotes a field if it holds a comma, quote or newline.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn migrations_csv(out: &RunOutput) -> String {
    let mut s = String::from(MIGRATIONS_HEADER);
    s.push('\n');
    for m in &out.migrations {
        let row = [
            field(&out.scenario),
            field(&out.vm_names[m.vm.0]),
            m.mode.as_str().to_string(),
            m.mobility.as_str().to_string(),
            sig9(m.t_start),
            sig9(m.t_disk),
            sig9(m.t_context),
            m.rounds().to_string(),
            sig9(m.t_precopy()),
            sig9(m.t_downtime),
            sig9(m.t_redirect),
            sig9(m.t_total),
            sig9(m.bytes_total),
            m.converged.to_string(),
            field(&m.warnings.join(";")),
        ];
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn sessions_csv(out: &RunOutput) -> String {
    let mut s = String::from(SESSIONS_HEADER);
    s.push('\n');
    for x in &out.sessions {
        let row = [
            field(&out.scenario),
            field(&x.name),
            field(&out.vm_names[x.vm.0]),
            x.interruptions.len().to_string(),
            sig9(x.max_interruption()),
            x.dropped().to_string(),
        ];
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn requests_csv(out: &RunOutput) -> String {
    let mut s = String::from(REQUESTS_HEADER);
    s.push('\n');
    for r in &out.requests {
        let row = [
            field(&out.scenario),
            field(&out.host_names[r.client.0]),
            field(&r.content),
            sig9(r.issued_at.secs()),
            field(&out.vm_names[r.served_by.0]),
            sig9(r.latency),
        ];
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Writes `migrations.csv`, `sessions.csv`, `requests.csv` and, if asked,
/// `trace.log` into `dir`, creating it when needed.
pub fn write_outputs(out: &RunOutput, dir: &Path, trace: bool) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("migrations.csv"), migrations_csv(out))?;
    fs::write(dir.join("sessions.csv"), sessions_csv(out))?;
    fs::write(dir.join("requests.csv"), requests_csv(out))?;
    if trace {
        fs::write(dir.join("trace.log"), &out.trace)?;
    }
    Ok(())
}
