mod conv;
mod elementwise;
pub(crate) mod linalg;
mod norm;
pub mod pairwise;
mod reduce;
mod resample;
mod shape;

pub(crate) use elementwise::sigmoid;
