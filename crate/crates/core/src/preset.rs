//! Named parameter sets: `paper` pins the published acquisition and training
//! constants, `desk` scales them to a laptop-sized phantom.

use serde::{Deserialize, Serialize};

use crate::geometry::ImageGeometry;
use crate::phantom::PhantomSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(format!("unknown preset `{other}` (expected desk or paper)")),
        }
    }
}

/// Aspect ratio (width / height) of the linear-probe crop.
pub const CROP_ASPECT: f64 = 0.418;
/// Output voxel and pixel size, mm.
pub const SPACING_MM: f64 = 0.5;

impl Preset {
    pub fn phantom(self) -> PhantomSpec {
        match self {
            Preset::Desk => PhantomSpec::default(),
            Preset::Paper => PhantomSpec {
                dims: [550, 450, 150],
                ..PhantomSpec::default()
            },
        }
    }

    /// Acquired frame geometry.
    pub fn frame(self) -> ImageGeometry {
        match self {
            // spans the desk phantom's x/y cross-section
            Preset::Desk => ImageGeometry::new(128, 128, SPACING_MM),
            Preset::Paper => ImageGeometry::new(450, 188, SPACING_MM),
        }
        .expect("preset geometry is valid")
    }

    /// Central crop geometry: imaging depth and probe aspect ratio.
    pub fn crop(self) -> ImageGeometry {
        let depth = match self {
            Preset::Desk => 64.0,
            Preset::Paper => 90.0,
        };
        ImageGeometry::from_depth(depth, CROP_ASPECT, SPACING_MM).expect("preset crop is valid")
    }

    /// Segmenter input size `(width, height)`.
    pub fn model_input(self) -> (usize, usize) {
        match self {
            Preset::Desk => (56, 128),
            Preset::Paper => (112, 256),
        }
    }

    /// Reconstruction volume dims.
    pub fn volume_dims(self) -> [usize; 3] {
        self.phantom().dims
    }

    pub fn dataset_size(self) -> usize {
        match self {
            Preset::Desk => 2000,
            Preset::Paper => 50_000,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_constants() {
        let p = Preset::Paper;
        let f = p.frame();
        assert_eq!((f.width, f.height, f.spacing), (450, 188, 0.5));
        let c = p.crop();
        assert_eq!((c.width, c.height), (75, 180));
        assert_eq!(p.model_input(), (112, 256));
        assert_eq!(p.volume_dims(), [550, 450, 150]);
        assert_eq!(p.dataset_size(), 50_000);
        assert_eq!(Preset::Desk.crop().height, 128);
        assert_eq!("paper".parse::<Preset>().unwrap(), Preset::Paper);
        assert!("huge".parse::<Preset>().is_err());
    }
}
