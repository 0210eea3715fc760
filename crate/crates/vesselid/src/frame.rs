//! Binary frame payload shared by `POST /reslice` and the stream.
//!
//! Layout, little-endian: 16-byte header (`magic`, `width: u32`,
//! `height: u32`, `flags: u32`), then `width·height` f32 pixels, the
//! predicted mask (u8 per pixel) and the ground-truth mask (u8 per pixel).
//! Flags: bit 0 plane outside the volume, bit 1 prediction present,
//! bits 16-31 the low 16 bits of the stream sequence number.

use vesselid_core::image::{GrayImage, LabelImage};

pub const FRAME_MAGIC: [u8; 4] = *b"VIF1";
pub const HEADER_LEN: usize = 16;

pub const FLAG_OUTSIDE: u32 = 1;
pub const FLAG_PREDICTION: u32 = 1 << 1;
const SEQ_SHIFT: u32 = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub image: GrayImage,
    pub predicted: LabelImage,
    pub ground_truth: LabelImage,
    pub outside: bool,
    pub has_prediction: bool,
    pub seq: u16,
}

#[derive(Debug, PartialEq, Eq)]
pub enum FrameError {
    Short { needed: usize, got: usize },
    Magic([u8; 4]),
    Length { expected: usize, got: usize },
}

impl std::fmt::Display for FrameError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FrameError::Short { needed, got } => write!(f, "frame needs {needed} header bytes, got {got}"),
            FrameError::Magic(m) => write!(f, "bad frame magic {m:?}"),
            FrameError::Length { expected, got } => write!(f, "frame body is {got} bytes, header implies {expected}"),
        }
    }
}

impl std::error::Error for FrameError {}

impl Frame {
    /// All-background frame flagged as outside the volume.
    pub fn outside(width: usize, height: usize, seq: u16) -> Self {
        Self {
            image: GrayImage::filled(width, height, 0.0),
            predicted: LabelImage::filled(width, height, 0),
            ground_truth: LabelImage::filled(width, height, 0),
            outside: true,
            has_prediction: false,
            seq,
        }
    }

    pub fn flags(&self) -> u32 {
        let mut f = (self.seq as u32) << SEQ_SHIFT;
        if self.outside {
            f |= FLAG_OUTSIDE;
        }
        if self.has_prediction {
            f |= FLAG_PREDICTION;
        }
        f
    }

    pub fn encode(&self) -> Vec<u8> {
        let (w, h) = self.image.dims();
        let n = w * h;
        let mut out = Vec::with_capacity(HEADER_LEN + 6 * n);
        out.extend_from_slice(&FRAME_MAGIC);
        out.extend_from_slice(&(w as u32).to_le_bytes());
        out.extend_from_slice(&(h as u32).to_le_bytes());
        out.extend_from_slice(&self.flags().to_le_bytes());
        for v in self.image.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(self.predicted.data());
        out.extend_from_slice(self.ground_truth.data());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::Short {
                needed: HEADER_LEN,
                got: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != FRAME_MAGIC {
            return Err(FrameError::Magic(magic));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let (w, h, flags) = (word(4) as usize, word(8) as usize, word(12));
        let n = w * h;
        let body = &bytes[HEADER_LEN..];
        if body.len() != 6 * n {
            return Err(FrameError::Length {
                expected: 6 * n,
                got: body.len(),
            });
        }
        let pixels = body[..4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let image = GrayImage::from_vec(w, h, pixels).map_err(|_| FrameError::Length {
            expected: 6 * n,
            got: body.len(),
        })?;
        let predicted = LabelImage::from_vec(w, h, body[4 * n..5 * n].to_vec()).expect("sized above");
        let ground_truth = LabelImage::from_vec(w, h, body[5 * n..].to_vec()).expect("sized above");
        Ok(Self {
            image,
            predicted,
            ground_truth,
            outside: flags & FLAG_OUTSIDE != 0,
            has_prediction: flags & FLAG_PREDICTION != 0,
            seq: (flags >> SEQ_SHIFT) as u16,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let f = Frame {
            image: GrayImage::from_fn(3, 2, |x, y| (x + 10 * y) as f32 * 0.5),
            predicted: LabelImage::from_fn(3, 2, |x, _| x as u8),
            ground_truth: LabelImage::from_fn(3, 2, |_, y| y as u8 + 3),
            outside: false,
            has_prediction: true,
            seq: 513,
        };
        let b = f.encode();
        assert_eq!(b.len(), 16 + 6 * 6);
        assert_eq!(&b[..4], b"VIF1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), (513 << 16) | 2);
        assert_eq!(f32::from_le_bytes(b[16 + 4 * 4..16 + 5 * 4].try_into().unwrap()), 5.5);
        assert_eq!(Frame::decode(&b).unwrap(), f);
        assert!(matches!(Frame::decode(&b[..10]), Err(FrameError::Short { .. })));
        assert!(matches!(Frame::decode(&b[..b.len() - 1]), Err(FrameError::Length { .. })));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(Frame::decode(&bad), Err(FrameError::Magic(_))));
        let o = Frame::outside(4, 4, 0);
        assert_eq!(o.flags(), FLAG_OUTSIDE);
        assert_eq!(Frame::decode(&o.encode()).unwrap(), o);
    }
}
