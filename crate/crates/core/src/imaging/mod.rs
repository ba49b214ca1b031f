//! Image containers and the classical pixel operations everything else is
//! built on.

mod edt;
mod image;
mod io;
mod metrics;
mod morph;
mod otsu;

pub use self::edt::{edt, EDT_UNREACHABLE};
pub use self::image::{to_grayscale, Image, Mask, LUMA_WEIGHTS};
pub use self::io::{decode_png, encode_png, read_png, write_png};
pub use self::metrics::{psnr, ssim, PSNR_CAP_DB};
pub use self::morph::{morph, MorphOp};
pub use self::otsu::{otsu_threshold, OTSU_BINS};
