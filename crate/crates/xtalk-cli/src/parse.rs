//! Flag-value parsing: dB-suffixed numbers, decimal grids and integer lists.

use crate::CliError;

/// Parse a linear ratio that may carry a `dB` suffix: `1000` and `30dB` are
/// the same value.
pub fn parse_db_or_linear(text: &str) -> Result<f64, CliError> {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    if let Some(db) = lower.strip_suffix("db") {
        let v: f64 = db
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("invalid dB value `{t}`")))?;
        Ok(10f64.powf(v / 10.0))
    } else {
        t.parse()
            .map_err(|_| CliError::config(format!("invalid numeric value `{t}`")))
    }
}

/// Fixed-point decimal: value as integer ticks at a power-of-ten scale.
/// Keeps grid arithmetic exact so CSV values print as written.
#[derive(Debug, Clone, Copy)]
struct Decimal {
    ticks: i64,
    places: u32,
}

fn parse_decimal(text: &str) -> Result<Decimal, CliError> {
    let t = text.trim();
    let bad = || CliError::config(format!("invalid decimal `{t}` in grid"));
    if t.is_empty() || t.contains(['e', 'E']) {
        // Scientific notation falls back to plain parsing with zero places.
        let v: f64 = t.parse().map_err(|_| bad())?;
        if v.fract() == 0.0 && v.abs() < 9e15 {
            return Ok(Decimal { ticks: v as i64, places: 0 });
        }
        return Err(CliError::config(format!(
            "grid endpoints must be plain decimals, got `{t}`"
        )));
    }
    let (sign, rest) = match t.strip_prefix('-') {
        Some(r) => (-1i64, r),
        None => (1i64, t),
    };
    let (int_part, frac_part) = match rest.split_once('.') {
        Some((i, f)) => (i, f),
        None => (rest, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if frac_part.len() > 12 {
        return Err(CliError::config(format!("too many decimal places in `{t}`")));
    }
    let mut ticks: i64 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        let d = c.to_digit(10).ok_or_else(bad)? as i64;
        ticks = ticks
            .checked_mul(10)
            .and_then(|v| v.checked_add(d))
            .ok_or_else(bad)?;
    }
    Ok(Decimal {
        ticks: sign * ticks,
        places: frac_part.len() as u32,
    })
}

fn rescale(d: Decimal, places: u32) -> i64 {
    d.ticks * 10i64.pow(places - d.places)
}

/// Parse `start:stop:step` (inclusive) or a comma list into f64 values.
/// Range arithmetic happens in decimal ticks, so `0:3:0.1` yields exactly
/// `0, 0.1, ..., 3`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let t = text.trim();
    if t.contains(':') {
        let parts: Vec<&str> = t.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::config(format!(
                "grid `{t}` must be start:stop:step or a comma list"
            )));
        }
        let (start, stop, step) = (
            parse_decimal(parts[0])?,
            parse_decimal(parts[1])?,
            parse_decimal(parts[2])?,
        );
        let places = start.places.max(stop.places).max(step.places);
        let scale = 10f64.powi(places as i32);
        let (a, b, s) = (
            rescale(start, places),
            rescale(stop, places),
            rescale(step, places),
        );
        if s <= 0 || b < a {
            return Err(CliError::config(format!(
                "grid `{t}` needs step > 0 and stop >= start"
            )));
        }
        let mut out = Vec::new();
        let mut tick = a;
        while tick <= b {
            out.push(tick as f64 / scale);
            tick += s;
        }
        Ok(out)
    } else {
        t.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::config(format!("invalid grid element `{s}`")))
            })
            .collect()
    }
}

/// Parse a comma list (or `start:stop:step`) of positive integers.
pub fn parse_usize_list(text: &str) -> Result<Vec<usize>, CliError> {
    let t = text.trim();
    if t.contains(':') {
        let vals = parse_grid(t)?;
        return vals
            .into_iter()
            .map(|v| {
                if v.fract() == 0.0 && v >= 0.0 {
                    Ok(v as usize)
                } else {
                    Err(CliError::config(format!("`{t}` must contain integers")))
                }
            })
            .collect();
    }
    t.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::config(format!("invalid integer `{s}`")))
        })
        .collect()
}

/// Apply `key=value` overrides onto a parsed TOML document. Dotted keys
/// descend into tables. Values are typed: dB-suffixed and plain numbers
/// become floats/integers, `true`/`false` become booleans, everything else
/// stays a string. Unknown keys surface later when the typed config parse
/// rejects them.
pub fn apply_overrides(
    doc: &mut toml::Value,
    overrides: &[String],
) -> Result<(), CliError> {
    for item in overrides {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            CliError::config(format!("override `{item}` must have the form key=value"))
        })?;
        let typed = type_override_value(value.trim());
        let mut node = &mut *doc;
        let path: Vec<&str> = key.trim().split('.').collect();
        for (depth, part) in path.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| {
                CliError::config(format!("override `{key}`: `{part}` is not a table"))
            })?;
            if depth + 1 == path.len() {
                table.insert(part.to_string(), typed.clone());
            } else {
                node = table
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()));
            }
        }
    }
    Ok(())
}

fn type_override_value(raw: &str) -> toml::Value {
    let lower = raw.to_ascii_lowercase();
    if let Some(db) = lower.strip_suffix("db") {
        if let Ok(v) = db.trim().parse::<f64>() {
            return toml::Value::Float(10f64.powf(v / 10.0));
        }
    }
    if let Ok(v) = raw.parse::<i64>() {
        return toml::Value::Integer(v);
    }
    if let Ok(v) = raw.parse::<f64>() {
        return toml::Value::Float(v);
    }
    match raw {
        "true" => toml::Value::Boolean(true),
        "false" => toml::Value::Boolean(false),
        _ => toml::Value::String(raw.to_string()),
    }
}
