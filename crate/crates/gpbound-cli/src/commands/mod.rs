pub mod bound;
pub mod check;
pub mod fit;
pub mod scenario;
pub mod validate;
