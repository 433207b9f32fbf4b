#pragma once

// Conditioning text encoder: the prompt embedding that serves as the
// generator's start token. Deliberately separate from the frozen reward
// encoders; trained jointly with the generator and frozen during RL.

#include <string>

#include "mogen/autodiff/ops.hpp"
#include "mogen/autodiff/optim.hpp"
#include "mogen/nn/layers.hpp"
#include "mogen/synthworld/motion.hpp"

namespace mogen::textcond {

using ad::Tape;
using ad::Var;

template <typename T>
class TextConditioner {
 public:
  TextConditioner() = default;
  TextConditioner(ad::ParamStore<T>& ps, const std::string& name, int vocab_size,
                  int model_dim, int max_len, Rng& rng, T init_std)
      : vocab_(vocab_size), dim_(model_dim), max_len_(max_len) {
    embed_ = ps.create_normal(name + ".embed", {vocab_size, model_dim}, rng, init_std);
    proj_ = nn::Linear<T>(ps, name + ".proj", model_dim, model_dim, rng, init_std);
    pos_ = Var<T>::leaf({max_len, model_dim},
                        nn::sinusoidal_table<T>(max_len, model_dim), false);
  }

  // [1, model_dim]
  Var<T> operator()(Tape<T>& tape, const world::PromptRecord& prompt) const {
    if (prompt.token_ids.empty())
      throw std::invalid_argument("conditioner: empty prompt");
    for (int id : prompt.token_ids)
      if (id < 0 || id >= vocab_)
        throw std::invalid_argument("conditioner: token outside vocabulary");
    std::vector<int> ids = prompt.token_ids;
    if (static_cast<int>(ids.size()) > max_len_)
      ids.resize(static_cast<std::size_t>(max_len_));
    std::vector<int> pos_ids(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) pos_ids[i] = static_cast<int>(i);
    auto h = ad::add(tape, ad::embedding(tape, embed_, ids),
                     ad::gather_rows(tape, pos_, pos_ids));
    auto pooled = ad::mean_axis0(tape, h);
    return proj_(tape, ad::reshape(tape, pooled, {1, dim_}));
  }

 private:
  int vocab_ = 0;
  int dim_ = 0;
  int max_len_ = 0;
  Var<T> embed_;
  Var<T> pos_;  // sinusoidal, not trained
  nn::Linear<T> proj_;
};

}  // namespace mogen::textcond
