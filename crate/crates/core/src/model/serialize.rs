//! Plain-text model files.
//!
//! ```text
//! biasattn-model v1
//! H=8 E=8 A=8 k=1 flags=position,markov Vs=23 Vt=23 arch=attentional enc=1 dec=2 ...
//! src_embed 23 8
//! <23 lines of 8 values>
//! ...
//! ```
//!
//! Values are written like C's `%.17g`, which is enough digits for every
//! `f64` to parse back to the identical bit pattern.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use super::config::{Architecture, BiasFlags, FertilityWindow, ModelConfig};
use super::network::Model;
use crate::error::{Error, Result};

const MAGIC: &str = "biasattn-model v1";

/// Formats a float the way `printf("%.17g")` does.
pub fn format_g17(v: f64) -> String {
    const PRECISION: i32 = 17;
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..PRECISION).contains(&exp) {
        let decimals = (PRECISION - 1 - exp) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn config_line(c: &ModelConfig) -> String {
    format!(
        "H={} E={} A={} k={} flags={} Vs={} Vt={} arch={} enc={} dec={} gamma={} xi2={} history={} glofer-weight={} glofer-sentinels={}",
        c.hidden,
        c.embed,
        c.align,
        c.window,
        c.flags,
        c.src_vocab,
        c.tgt_vocab,
        c.architecture,
        c.encoder_layers,
        c.decoder_layers,
        format_g17(c.gamma),
        c.fertility_window,
        if c.detach_history { "detach" } else { "grad" },
        format_g17(c.fertility_weight),
        if c.fertility_sentinels { "include" } else { "exclude" },
    )
}

fn parse_config(line: &str) -> Result<ModelConfig> {
    let bad = |msg: String| Error::ModelFormat { line: 2, msg };
    let fields: HashMap<&str, &str> = line
        .split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| bad(format!("malformed field `{kv}`")))
        })
        .collect::<Result<_>>()?;
    let get = |key: &str| {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| bad(format!("missing `{key}`")))
    };
    let num = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| bad(format!("`{key}` is not an integer")))
    };
    let float = |key: &str, default: f64| -> Result<f64> {
        match fields.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| bad(format!("`{key}` is not a number"))),
            None => Ok(default),
        }
    };
    let arch: Architecture = match fields.get("arch") {
        Some(a) => a.parse()?,
        None => Architecture::Attentional,
    };
    let mut c = ModelConfig::new(arch, num("Vs")?, num("Vt")?);
    c.hidden = num("H")?;
    c.embed = num("E")?;
    c.align = num("A")?;
    c.window = num("k")?;
    c.flags = get("flags")?.parse::<BiasFlags>()?;
    if fields.contains_key("enc") {
        c.encoder_layers = num("enc")?;
    }
    if fields.contains_key("dec") {
        c.decoder_layers = num("dec")?;
    }
    c.gamma = float("gamma", c.gamma)?;
    if let Some(w) = fields.get("xi2") {
        c.fertility_window = w.parse::<FertilityWindow>()?;
    }
    c.detach_history = match fields.get("history") {
        None | Some(&"grad") => false,
        Some(&"detach") => true,
        Some(other) => return Err(bad(format!("unknown history mode `{other}`"))),
    };
    c.fertility_weight = float("glofer-weight", c.fertility_weight)?;
    c.fertility_sentinels = match fields.get("glofer-sentinels") {
        None | Some(&"include") => true,
        Some(&"exclude") => false,
        Some(other) => return Err(bad(format!("unknown sentinel mode `{other}`"))),
    };
    c.validate().map_err(|e| bad(e.to_string()))?;
    Ok(c)
}

impl Model {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "{}", config_line(self.config()))?;
        for (_, name, t) in self.params().iter() {
            writeln!(w, "{name} {} {}", t.rows(), t.cols())?;
            for r in 0..t.rows() {
                let row: Vec<String> = t.row(r).iter().map(|v| format_g17(*v)).collect();
                writeln!(w, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Model> {
        let mut lines = r.lines().enumerate().map(|(n, l)| l.map(|l| (n + 1, l)));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some(l) => Ok(l?),
                None => Err(Error::ModelFormat {
                    line: 0,
                    msg: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let (_, magic) = next("header")?;
        if magic.trim_end() != MAGIC {
            return Err(Error::ModelFormat {
                line: 1,
                msg: format!("expected `{MAGIC}`"),
            });
        }
        let (_, config) = next("config line")?;
        let config = parse_config(&config)?;
        let mut model = Model::zeroed(config)?;
        let ids: Vec<_> = model.params().iter().map(|(id, _, _)| id).collect();
        for id in ids {
            let expected_name = model.params().name(id).to_string();
            let (rows, cols) = model.params().get(id).dims();
            let (n, header) = next(&format!("tensor `{expected_name}`"))?;
            let parts: Vec<&str> = header.split_whitespace().collect();
            let matches = parts.len() == 3
                && parts[0] == expected_name
                && parts[1].parse::<usize>().ok() == Some(rows)
                && parts[2].parse::<usize>().ok() == Some(cols);
            if !matches {
                return Err(Error::ModelFormat {
                    line: n,
                    msg: format!("expected `{expected_name} {rows} {cols}`, got `{header}`"),
                });
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (n, line) = next(&format!("row of `{expected_name}`"))?;
                let before = data.len();
                for field in line.split_whitespace() {
                    let v: f64 = field.parse().map_err(|_| Error::ModelFormat {
                        line: n,
                        msg: format!("bad number `{field}`"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::ModelFormat {
                            line: n,
                            msg: "non-finite value".into(),
                        });
                    }
                    data.push(v);
                }
                if data.len() - before != cols {
                    return Err(Error::ModelFormat {
                        line: n,
                        msg: format!("expected {cols} values, got {}", data.len() - before),
                    });
                }
            }
            model
                .params_mut()
                .get_mut(id)
                .data_mut()
                .copy_from_slice(&data);
        }
        if let Some(extra) = lines.next() {
            let (n, _) = extra?;
            return Err(Error::ModelFormat {
                line: n,
                msg: "trailing content".into(),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let file = fs::File::open(path)?;
        Model::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g17_matches_printf() {
        // Reference strings from C printf("%.17g").
        let cases = [
            (1.0, "1"),
            (0.5, "0.5"),
            (0.08, "0.080000000000000002"),
            (-0.1, "-0.10000000000000001"),
            (1e-5, "1.0000000000000001e-05"),
            (123456.0, "123456"),
            (1e17, "1e+17"),
            (1e16, "10000000000000000"),
            (2.5e-300, "2.5e-300"),
            (0.0001, "0.0001"),
            (-0.0, "-0"),
        ];
        for (v, s) in cases {
            assert_eq!(format_g17(v), s, "{v:e}");
        }
    }

    proptest! {
        #[test]
        fn g17_round_trips_bits(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let parsed: f64 = format_g17(v).parse().unwrap();
            prop_assert_eq!(parsed.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn config_line_round_trips() {
        let mut c = ModelConfig::new(Architecture::Attentional, 30, 40).with_dims(8, 6, 4);
        c.flags = BiasFlags::all();
        c.window = 2;
        c.gamma = 0.25;
        c.fertility_window = FertilityWindow::Literal;
        c.detach_history = true;
        c.fertility_sentinels = false;
        assert_eq!(parse_config(&config_line(&c)).unwrap(), c);
        let line = config_line(&c);
        assert!(line.starts_with("H=8 E=6 A=4 k=2 flags=position,markov,local-fertility,global-fertility,xu-penalty Vs=30 Vt=40"));
    }

    #[test]
    fn model_round_trips_bit_exactly() {
        let c = ModelConfig::new(Architecture::Attentional, 7, 9)
            .with_dims(3, 2, 4)
            .with_flags(BiasFlags::all());
        let m = Model::new(c, 11).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = Model::read_from(&buf[..]).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);

        let base = Model::new(
            ModelConfig::new(Architecture::Baseline, 5, 6).with_dims(2, 2, 2),
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        base.write_to(&mut buf).unwrap();
        assert_eq!(Model::read_from(&buf[..]).unwrap(), base);
    }

    #[test]
    fn corrupt_files_report_line() {
        let m = Model::new(
            ModelConfig::new(Architecture::Baseline, 4, 4).with_dims(2, 2, 2),
            0,
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = "0.1 oops";
        let broken = lines.join("\n");
        match Model::read_from(broken.as_bytes()) {
            Err(Error::ModelFormat { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Model::read_from("not a model\n".as_bytes()).is_err());
        let truncated = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(Model::read_from(truncated.as_bytes()).is_err());
    }
}
