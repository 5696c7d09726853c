//! JSON encoding of regions. Boxes are `[[center...], [sides...]]`; mask
//! bits are packed MSB-first in row-major order and base64 encoded.

use super::{Aabb, Mask, Punched, Region};
use crate::error::{Result, TrapError};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Value};
use std::path::Path;

fn box_json(b: &Aabb) -> Value {
    json!([b.center, b.sides])
}

fn parse_vec(v: &Value, what: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| TrapError::Format(format!("{what}: expected an array")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| TrapError::Format(format!("{what}: expected numbers")))
        })
        .collect()
}

fn parse_box(v: &Value) -> Result<Aabb> {
    let pair = v
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| TrapError::Format("box must be [[center...], [sides...]]".into()))?;
    Aabb::new(
        parse_vec(&pair[0], "center")?,
        parse_vec(&pair[1], "sides")?,
    )
}

fn parse_boxes(v: Option<&Value>) -> Result<Vec<Aabb>> {
    v.and_then(Value::as_array)
        .ok_or_else(|| TrapError::Format("missing box list".into()))?
        .iter()
        .map(parse_box)
        .collect()
}

pub fn pack_bits(bits: &[bool]) -> String {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
    }
    STANDARD.encode(bytes)
}

pub fn unpack_bits(s: &str, n: usize) -> Result<Vec<bool>> {
    let bytes = STANDARD
        .decode(s)
        .map_err(|e| TrapError::Format(format!("mask bits: {e}")))?;
    if bytes.len() != n.div_ceil(8) {
        return Err(TrapError::Format(format!(
            "mask bits: {} bytes for {n} cells",
            bytes.len()
        )));
    }
    Ok((0..n)
        .map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0)
        .collect())
}

pub fn region_to_json(r: &Region) -> Value {
    let d = r.dim();
    match r {
        Region::BoxUnion(b) => {
            json!({"d": d, "kind": "box_union", "boxes": b.iter().map(box_json).collect::<Vec<_>>()})
        }
        Region::BoxComplement { outer, holes } => json!({
            "d": d, "kind": "box_complement", "outer": box_json(outer),
            "holes": holes.iter().map(box_json).collect::<Vec<_>>()
        }),
        Region::Punched(p) => json!({
            "d": d, "kind": "punched", "outer": box_json(&p.outer),
            "hole_side": p.hole_side, "hole_centers": p.centers
        }),
        Region::Mask(m) => json!({
            "d": d, "kind": "mask",
            "mask": {"h": m.h, "origin": m.origin, "shape": m.shape, "bits": pack_bits(&m.bits)}
        }),
        Region::Empty(_) => json!({"d": d, "kind": "empty"}),
    }
}

pub fn region_from_json(v: &Value) -> Result<Region> {
    let d = v
        .get("d")
        .and_then(Value::as_u64)
        .ok_or_else(|| TrapError::Format("missing integer field `d`".into()))? as usize;
    if !(2..=3).contains(&d) {
        return Err(TrapError::Format(format!("unsupported dimension {d}")));
    }
    let kind = v
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| TrapError::Format("missing field `kind`".into()))?;
    let region = match kind {
        "box_union" => {
            let boxes = parse_boxes(v.get("boxes"))?;
            if boxes.is_empty() {
                Region::Empty(d)
            } else {
                Region::BoxUnion(boxes)
            }
        }
        "box_complement" => Region::BoxComplement {
            outer: parse_box(
                v.get("outer")
                    .ok_or_else(|| TrapError::Format("missing `outer`".into()))?,
            )?,
            holes: parse_boxes(v.get("holes"))?,
        },
        "punched" => {
            let outer = parse_box(
                v.get("outer")
                    .ok_or_else(|| TrapError::Format("missing `outer`".into()))?,
            )?;
            let hole_side = v
                .get("hole_side")
                .and_then(Value::as_f64)
                .ok_or_else(|| TrapError::Format("missing `hole_side`".into()))?;
            let centers = v
                .get("hole_centers")
                .and_then(Value::as_array)
                .ok_or_else(|| TrapError::Format("missing `hole_centers`".into()))?
                .iter()
                .map(|a| parse_vec(a, "hole_centers"))
                .collect::<Result<Vec<_>>>()?;
            Region::Punched(Punched {
                outer,
                hole_side,
                centers,
            })
        }
        "mask" => {
            let m = v
                .get("mask")
                .ok_or_else(|| TrapError::Format("missing `mask`".into()))?;
            let h = m
                .get("h")
                .and_then(Value::as_f64)
                .ok_or_else(|| TrapError::Format("mask.h".into()))?;
            let origin = parse_vec(m.get("origin").unwrap_or(&Value::Null), "mask.origin")?;
            let shape: Vec<usize> = m
                .get("shape")
                .and_then(Value::as_array)
                .ok_or_else(|| TrapError::Format("mask.shape".into()))?
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|u| u as usize)
                        .ok_or_else(|| TrapError::Format("mask.shape".into()))
                })
                .collect::<Result<_>>()?;
            let n = shape.iter().product();
            let bits = unpack_bits(m.get("bits").and_then(Value::as_str).unwrap_or(""), n)?;
            Region::Mask(Mask::new(h, origin, shape, bits)?)
        }
        "empty" => Region::Empty(d),
        other => return Err(TrapError::Format(format!("unknown region kind `{other}`"))),
    };
    if !region.is_empty() && region.dim() != d {
        return Err(TrapError::Format("dimension mismatch".into()));
    }
    Ok(region)
}

pub fn write_region(path: &Path, r: &Region) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&region_to_json(r))?)?;
    Ok(())
}

pub fn read_region(path: &Path) -> Result<Region> {
    let text = std::fs::read_to_string(path)?;
    region_from_json(&serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_punched_region, PunchedDomainSpec};

    #[test]
    fn round_trips_are_exact() {
        let sq = Region::BoxUnion(vec![
            Aabb::new(vec![0.1, 1.0 / 3.0], vec![0.7, 2.0]).unwrap(),
            Aabb::new(vec![-0.3, 0.2], vec![1e-7, 1.5]).unwrap(),
        ]);
        let punched = build_punched_region(&PunchedDomainSpec {
            d: 3,
            n: 1.0,
            spacing: 0.3,
            hole_side: 0.07,
        })
        .unwrap();
        let mask = Region::Mask(sq.to_mask(0.1, &Aabb::symmetric(2, 1.3).unwrap()).unwrap());
        let comp = Region::BoxComplement {
            outer: Aabb::symmetric(2, 1.0).unwrap(),
            holes: vec![Aabb::cube(vec![0.5, 0.5], 0.2).unwrap()],
        };
        for r in [sq, punched, mask, comp, Region::Empty(2)] {
            let text = serde_json::to_string(&region_to_json(&r)).unwrap();
            let back = region_from_json(&serde_json::from_str(&text).unwrap()).unwrap();
            assert_eq!(back, r);
            assert_eq!(serde_json::to_string(&region_to_json(&back)).unwrap(), text);
        }
    }

    #[test]
    fn bit_packing_is_msb_first() {
        assert_eq!(
            pack_bits(&[true, false, false, false, false, false, false, false, true]),
            STANDARD.encode([0x80u8, 0x80])
        );
        assert!(unpack_bits("gA==", 20).is_err());
    }

    #[test]
    fn rejects_unknown_kinds() {
        assert!(region_from_json(&json!({"d": 2, "kind": "sphere"})).is_err());
        assert!(region_from_json(&json!({"d": 4, "kind": "empty"})).is_err());
    }
}
