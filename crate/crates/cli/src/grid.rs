//! Grid specifications: `a,b,c` lists or `lo:hi:count[:lin|log]` ranges (endpoints included).

use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.contains(':') {
            return parse_range(s).map(Grid);
        }
        let values = s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad grid value `{v}`")))
            .collect::<Result<Vec<_>, _>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(format!("grid `{s}` has a non-finite value"));
        }
        Ok(Grid(values))
    }
}

fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let (lo, hi, count, scale) = match parts.as_slice() {
        [lo, hi, count] => (lo, hi, count, "lin"),
        [lo, hi, count, scale] => (lo, hi, count, *scale),
        _ => return Err(format!("grid range `{s}` is not lo:hi:count[:lin|log]")),
    };
    let num = |v: &str| v.trim().parse::<f64>().ok().filter(|x| x.is_finite());
    let (Some(lo), Some(hi)) = (num(lo), num(hi)) else {
        return Err(format!("bad bounds in grid `{s}`"));
    };
    let count: usize = count.trim().parse().map_err(|_| format!("bad point count in grid `{s}`"))?;
    if count == 0 {
        return Err(format!("grid `{s}` has no points"));
    }
    if hi < lo {
        return Err(format!("grid `{s}` has hi < lo"));
    }
    if count == 1 {
        return if lo == hi { Ok(vec![lo]) } else { Err(format!("grid `{s}` needs at least two points")) };
    }
    let last = (count - 1) as f64;
    match scale {
        "lin" => Ok((0..count).map(|i| if i == count - 1 { hi } else { lo + (hi - lo) * i as f64 / last }).collect()),
        "log" => {
            if lo <= 0.0 {
                return Err(format!("log grid `{s}` needs lo > 0"));
            }
            let (a, b) = (lo.ln(), hi.ln());
            Ok((0..count)
                .map(|i| match i {
                    0 => lo,
                    _ if i == count - 1 => hi,
                    _ => (a + (b - a) * i as f64 / last).exp(),
                })
                .collect())
        }
        other => Err(format!("unknown grid scale `{other}`")),
    }
}
