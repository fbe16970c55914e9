pub mod ablate;
pub mod checkgrad;
pub mod toy;
pub mod train;
