#include "intercnn/params.hpp"

namespace icnn {

std::size_t ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (name.empty()) fail(ErrorKind::Contract, "parameter name must be non-empty");
  if (index_.count(name)) fail(ErrorKind::Contract, "duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(value), trainable});
  return entries_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t ParamStore::trainable_count() const {
  std::uint64_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.numel();
  return n;
}

ParamStore ParamStore::cast(DType dtype) const {
  ParamStore out;
  for (const auto& e : entries_) out.add(e.name, e.value.cast(dtype), e.trainable);
  return out;
}

bool ParamStore::bitwise_equal(const ParamStore& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i)
    if (entries_[i].name != other.entries_[i].name || !entries_[i].value.bitwise_equal(other.entries_[i].value))
      return false;
  return true;
}

std::vector<Var> bind_params(Tape& tape, const ParamStore& store, bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i)
    vars.push_back(tape.leaf(store.value(i), requires_grad && store.trainable(i)));
  return vars;
}

}  // namespace icnn
