pub mod blowup;
pub mod calculus;
pub mod flow;
pub mod model;
pub mod scalar;
pub mod scenario;
pub mod tensor;
pub mod verify;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    pub struct Overview;
    #[doc = include_str!("../../../book/src/conventions.md")]
    pub struct Conventions;
    #[doc = include_str!("../../../book/src/calculus.md")]
    pub struct Calculus;
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct Model;
    #[doc = include_str!("../../../book/src/blowup.md")]
    pub struct Blowup;
    #[doc = include_str!("../../../book/src/verification.md")]
    pub struct Verification;
    #[doc = include_str!("../../../book/src/running.md")]
    pub struct Running;
}
