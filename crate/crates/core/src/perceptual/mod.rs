//! Pixel, feature-reconstruction and style losses.

mod color;
mod extractor;
mod gram;
mod loss;

pub use color::{luma, rgb_to_ycbcr, ycbcr_backward, RGB_TO_YCBCR, YCBCR_OFFSET};
pub use extractor::{
    bias_name, kernel_name, ExtractorTrace, FeatureExtractor, Stage, IMAGENET_MEAN, IMAGENET_STD, VGG19_BLOCKS,
    VGG19_WIDTHS,
};
pub use gram::{gram, gram_backward, GramMatrix};
pub use loss::{l1_pixel_loss, CompositeLoss, FeatureTaps, LossTerms, LossWeights, PixelMode};
