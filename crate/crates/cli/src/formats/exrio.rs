//! OpenEXR IO for float payloads: texture atlases (color + confidence +
//! validity) and 7-channel condition tensors. All channels are written as
//! f32 with lossless compression so values round-trip exactly.

use std::path::Path;

use diorama_core::bake::TexelAtlas;
use diorama_core::render::ConditionTensor;
use exr::prelude::{
    AnyChannel, AnyChannels, Encoding, FlatSamples, Image, Layer, LayerAttributes, ReadChannels,
    ReadLayers, WritableImage,
};

use crate::error::{CliError, Result};

/// Channel names of a condition tensor, in tensor channel order.
pub const CONDITION_CHANNELS: [&str; 7] = [
    "normal.x",
    "normal.y",
    "normal.z",
    "position.x",
    "position.y",
    "position.z",
    "edge",
];

/// Channel names of an atlas EXR, in [`TexelAtlas`] field order R,G,B first.
pub const ATLAS_CHANNELS: [&str; 5] = ["R", "G", "B", "confidence", "valid"];

pub fn write_channels(
    path: &Path,
    width: u32,
    height: u32,
    channels: Vec<(String, Vec<f32>)>,
) -> Result<()> {
    let n = width as usize * height as usize;
    for (name, data) in &channels {
        if data.len() != n {
            return Err(CliError::invalid(format!(
                "channel {name} holds {} samples, image needs {n}",
                data.len()
            )));
        }
    }
    let list = channels
        .into_iter()
        .map(|(name, data)| AnyChannel::new(name.as_str(), FlatSamples::F32(data)))
        .collect();
    let layer = Layer::new(
        (width as usize, height as usize),
        LayerAttributes::default(),
        Encoding::FAST_LOSSLESS,
        AnyChannels::sort(list),
    );
    Image::from_layer(layer)
        .write()
        .to_file(path)
        .map_err(|e| CliError::format(path, e.to_string()))
}

pub fn read_channels(path: &Path) -> Result<(u32, u32, Vec<(String, Vec<f32>)>)> {
    let image = exr::prelude::read()
        .no_deep_data()
        .largest_resolution_level()
        .all_channels()
        .first_valid_layer()
        .all_attributes()
        .from_file(path)
        .map_err(|e| CliError::format(path, e.to_string()))?;
    let size = image.layer_data.size;
    let channels = image
        .layer_data
        .channel_data
        .list
        .into_iter()
        .map(|ch| {
            (
                ch.name.to_string(),
                ch.sample_data.values_as_f32().collect::<Vec<f32>>(),
            )
        })
        .collect();
    Ok((size.x() as u32, size.y() as u32, channels))
}

fn find(
    path: &Path,
    channels: &[(String, Vec<f32>)],
    name: &str,
) -> Result<Vec<f32>> {
    channels
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, d)| d.clone())
        .ok_or_else(|| CliError::format(path, format!("missing channel {name}")))
}

pub fn write_atlas(path: &Path, atlas: &TexelAtlas) -> Result<()> {
    let n = atlas.color.len();
    let mut channels: Vec<(String, Vec<f32>)> = ATLAS_CHANNELS
        .iter()
        .map(|name| (name.to_string(), Vec::with_capacity(n)))
        .collect();
    for i in 0..n {
        for k in 0..3 {
            channels[k].1.push(atlas.color[i][k]);
        }
        channels[3].1.push(atlas.confidence[i]);
        channels[4].1.push(if atlas.valid[i] { 1.0 } else { 0.0 });
    }
    write_channels(path, atlas.res, atlas.res, channels)
}

pub fn read_atlas(path: &Path) -> Result<TexelAtlas> {
    let (width, height, channels) = read_channels(path)?;
    if width != height {
        return Err(CliError::format(path, "atlas must be square"));
    }
    let r = find(path, &channels, "R")?;
    let g = find(path, &channels, "G")?;
    let b = find(path, &channels, "B")?;
    let confidence = find(path, &channels, "confidence")?;
    let valid = find(path, &channels, "valid")?;
    let mut atlas = TexelAtlas::new(width);
    for i in 0..r.len() {
        atlas.color[i] = [r[i], g[i], b[i]];
        atlas.confidence[i] = confidence[i];
        atlas.valid[i] = valid[i] != 0.0;
    }
    Ok(atlas)
}

pub fn write_condition(path: &Path, cond: &ConditionTensor) -> Result<()> {
    let n = cond.data.len();
    let mut channels: Vec<(String, Vec<f32>)> = CONDITION_CHANNELS
        .iter()
        .map(|name| (name.to_string(), Vec::with_capacity(n)))
        .collect();
    for px in &cond.data {
        for (k, channel) in channels.iter_mut().enumerate() {
            channel.1.push(px[k]);
        }
    }
    write_channels(path, cond.width, cond.height, channels)
}

pub fn read_condition(path: &Path) -> Result<ConditionTensor> {
    let (width, height, channels) = read_channels(path)?;
    let mut planes = Vec::with_capacity(7);
    for name in CONDITION_CHANNELS {
        planes.push(find(path, &channels, name)?);
    }
    let n = width as usize * height as usize;
    let mut cond = ConditionTensor {
        width,
        height,
        data: vec![[0.0; 7]; n],
    };
    for i in 0..n {
        for k in 0..7 {
            cond.data[i][k] = planes[k][i];
        }
    }
    Ok(cond)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("diorama-exr-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn atlas_round_trip_is_bit_exact() {
        let mut atlas = TexelAtlas::new(8);
        for i in 0..64 {
            atlas.color[i] = [i as f32 * 0.01, 1.0 - i as f32 * 0.01, 0.5];
            atlas.confidence[i] = (i % 7) as f32 * 0.3;
            atlas.valid[i] = i % 3 == 0;
        }
        let path = tmp("atlas.exr");
        write_atlas(&path, &atlas).unwrap();
        let back = read_atlas(&path).unwrap();
        assert_eq!(back.res, 8);
        for i in 0..64 {
            for k in 0..3 {
                assert_eq!(back.color[i][k].to_bits(), atlas.color[i][k].to_bits());
            }
            assert_eq!(back.confidence[i].to_bits(), atlas.confidence[i].to_bits());
            assert_eq!(back.valid[i], atlas.valid[i]);
        }
    }

    #[test]
    fn condition_round_trip_is_bit_exact() {
        let mut cond = ConditionTensor {
            width: 4,
            height: 3,
            data: vec![[0.0; 7]; 12],
        };
        for (i, px) in cond.data.iter_mut().enumerate() {
            for k in 0..7 {
                px[k] = (i * 7 + k) as f32 * 0.013;
            }
        }
        let path = tmp("cond.exr");
        write_condition(&path, &cond).unwrap();
        let back = read_condition(&path).unwrap();
        assert_eq!(back.width, 4);
        assert_eq!(back.height, 3);
        for (a, b) in back.data.iter().zip(&cond.data) {
            for k in 0..7 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
    }
}
