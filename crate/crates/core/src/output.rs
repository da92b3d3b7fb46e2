//! Bit-stable serialization: every float is written with 17 significant
//! digits, so values read back are identical to the ones written.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::sim::Trajectory;
use crate::Result;

/// Pretty JSON formatter that prints floats in round-trip exponent form.
struct ExactFloats<'a>(PrettyFormatter<'a>);

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(value: f64) -> String {
    if value.is_finite() {
        format!("{value:.16e}")
    } else {
        "NaN".to_string()
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn trajectory_header(n: usize, m_s: usize, m_v: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=m_s).map(|i| format!("us{i}")));
    h.extend((1..=m_v).map(|i| format!("uv{i}")));
    h.extend(["B", "V", "eta", "zeta", "kkt_residual", "attack_active"].map(String::from));
    h
}

/// Writes `t, x1..xn, us.., uv.., B, V, eta, zeta, kkt_residual, attack_active`.
pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory, m_s: usize, m_v: usize) -> Result<()> {
    let n = traj.x.first().map_or(0, |x| x.len());
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| crate::Error::Io(io::Error::other(e));
    w.write_record(trajectory_header(n, m_s, m_v)).map_err(io_err)?;
    for k in 0..traj.len() {
        let mut rec: Vec<String> = vec![format_f64(traj.t[k])];
        rec.extend(traj.x[k].iter().map(|v| format_f64(*v)));
        rec.extend(traj.u_s[k].iter().map(|v| format_f64(*v)));
        rec.extend(traj.u_v[k].iter().map(|v| format_f64(*v)));
        for v in [traj.b[k], traj.v[k], traj.eta[k], traj.zeta[k], traj.kkt_residual[k]] {
            rec.push(format_f64(v));
        }
        rec.push(if traj.attack_active[k] { "1" } else { "0" }.to_string());
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a header and rows of numbers, each formatted with [`format_f64`].
pub fn write_csv<W: Write>(out: W, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| crate::Error::Io(io::Error::other(e));
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format_f64(*v))).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}
