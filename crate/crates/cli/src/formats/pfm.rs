//! PFM depth maps: grayscale `Pf`, little-endian (negative scale), rows
//! stored bottom-up per the format convention. Non-positive and non-finite
//! values mean "no depth".

use std::fs;
use std::path::Path;

use diorama_core::extract::DepthMap;

use crate::error::{CliError, Result};

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut bytes = format!("Pf\n{} {}\n-1.0\n", depth.width, depth.height).into_bytes();
    for y in (0..depth.height).rev() {
        for x in 0..depth.width {
            bytes.extend_from_slice(&depth.get(x, y).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let data = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let bad = |m: &str| CliError::format(path, m);

    let mut at = 0usize;
    let mut token = |data: &[u8], at: &mut usize| -> Result<String> {
        while *at < data.len() && data[*at].is_ascii_whitespace() {
            *at += 1;
        }
        let start = *at;
        while *at < data.len() && !data[*at].is_ascii_whitespace() {
            *at += 1;
        }
        if start == *at {
            return Err(CliError::format(path, "truncated PFM header"));
        }
        Ok(String::from_utf8_lossy(&data[start..*at]).into_owned())
    };

    let magic = token(&data, &mut at)?;
    if magic == "PF" {
        return Err(bad("color PFM is not supported; expected grayscale Pf"));
    }
    if magic != "Pf" {
        return Err(bad("not a PFM file"));
    }
    let width: u32 = token(&data, &mut at)?
        .parse()
        .map_err(|_| bad("bad width"))?;
    let height: u32 = token(&data, &mut at)?
        .parse()
        .map_err(|_| bad("bad height"))?;
    let scale: f64 = token(&data, &mut at)?
        .parse()
        .map_err(|_| bad("bad scale"))?;
    if scale >= 0.0 {
        return Err(bad("big-endian PFM is not supported"));
    }
    // Exactly one whitespace byte separates header and payload.
    at += 1;

    let n = width as usize * height as usize;
    if data.len() < at + 4 * n {
        return Err(bad("payload shorter than the header declares"));
    }
    let mut depth = DepthMap::new(width, height);
    for y in 0..height {
        let src_row = (height - 1 - y) as usize;
        for x in 0..width {
            let o = at + 4 * (src_row * width as usize + x as usize);
            let bytes: [u8; 4] = data[o..o + 4].try_into().unwrap();
            depth.set(x, y, f32::from_le_bytes(bytes));
        }
    }
    Ok(depth)
}
