//! Pixel-space nearest-neighbor search, used to check whether generated
//! paintings copy training images.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::RawImage;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Neighbor {
    pub id: String,
    /// Euclidean norm over all pixels and channels on the `[0, 1]` scale.
    pub distance: f64,
}

/// Exact L2 distance between equally shaped images, on the `[0, 1]` scale.
pub fn pixel_l2(a: &RawImage, b: &RawImage) -> Result<f64> {
    if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
        return Err(Error::shape(
            "pixel_l2",
            format!("{}x{}x{} vs {}x{}x{}", a.width(), a.height(), a.channels(), b.width(), b.height(), b.channels()),
        ));
    }
    let sq: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| {
            let d = i64::from(p) - i64::from(q);
            (d * d) as u64
        })
        .sum();
    Ok(libm::sqrt(sq as f64) / 255.0)
}

/// Brings `query` to the corpus geometry: bilinear resize, gray → RGB.
pub fn conform(query: &RawImage, width: usize, height: usize, channels: usize) -> Result<RawImage> {
    let resized = query.resize_bilinear(width, height)?;
    match (resized.channels(), channels) {
        (a, b) if a == b => Ok(resized),
        (1, 3) => Ok(resized.to_rgb()),
        (a, b) => Err(Error::shape("nearest_neighbors", format!("query has {a} channels, corpus {b}"))),
    }
}

/// The `k` corpus entries closest to `query`, ascending by distance with ties
/// broken by id.
pub fn nearest_neighbors<'a, I>(query: &RawImage, corpus: I, k: usize) -> Result<Vec<Neighbor>>
where
    I: IntoIterator<Item = (&'a str, &'a RawImage)>,
{
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mut iter = corpus.into_iter().peekable();
    let first = iter.peek().ok_or(Error::Empty("nearest-neighbor corpus"))?.1;
    let q = conform(query, first.width(), first.height(), first.channels())?;
    let mut hits = iter
        .map(|(id, img)| Ok(Neighbor { id: id.into(), distance: pixel_l2(&q, img)? }))
        .collect::<Result<Vec<_>>>()?;
    hits.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
    hits.truncate(k);
    Ok(hits)
}
