//! Small neural-network engine: feed-forward backpropagation, Jordan-Elman
//! recurrence, NARX delay lines and topology search.

mod io;
mod narx;
mod network;
mod recurrent;
mod search;
mod train;

pub use io::{NETWORK_FORMAT, NETWORK_VERSION};
pub use narx::{narx_dataset, narx_free_run, narx_predict, narx_regressor};
pub use network::{Activation, Layer, Network, Normalizer, Recurrence, Topology};
pub use recurrent::{je_train, JeSequence, JeSession};
pub use search::{topology_search, DepthResult, PruneRound, SearchConfig, SearchReport, SizeResult, UnitTest};
pub use train::{backprop_gradients, batch_mse, train, Dataset, EpochStats, Gradients, TrainConfig, TrainHistory};

#[cfg(test)]
mod tests;
