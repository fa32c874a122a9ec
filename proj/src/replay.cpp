#include "cfrl/replay.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include "cfrl/binary_io.hpp"

namespace cfrl {

namespace {

void write_state(std::ostream& out, const StateVector& s) {
  binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(s.size()));
  binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(s.nonZeros()));
  for (StateVector::InnerIterator it(s); it; ++it) {
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(it.index()));
    binary::write<double>(out, it.value());
  }
}

StateVector read_state(std::istream& in) {
  auto size = binary::read<std::uint64_t>(in);
  auto nnz = binary::read<std::uint64_t>(in);
  if (nnz > size) throw binary::FormatError("corrupt state vector");
  StateVector s(static_cast<Eigen::Index>(size));
  s.reserve(static_cast<Eigen::Index>(nnz));
  for (std::uint64_t k = 0; k < nnz; ++k) {
    auto index = binary::read<std::uint32_t>(in);
    s.insertBack(index) = binary::read<double>(in);
  }
  return s;
}

void write_mask(std::ostream& out, const ActionMask& mask) {
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(mask.universe()));
  std::vector<std::uint8_t> bytes((static_cast<std::size_t>(mask.universe()) + 7) / 8, 0);
  mask.for_each([&](int i) { bytes[static_cast<std::size_t>(i) / 8] |= static_cast<std::uint8_t>(1u << (i % 8)); });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ActionMask read_mask(std::istream& in) {
  auto n = binary::read<std::uint32_t>(in);
  std::vector<std::uint8_t> bytes((n + 7) / 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw binary::FormatError("unexpected end of file");
  std::vector<int> items;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (bytes[i / 8] & (1u << (i % 8))) items.push_back(static_cast<int>(i));
  }
  return ActionMask::of(static_cast<int>(n), items);
}

}  // namespace

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be >= 1");
}

void ReplayMemory::push(Transition tr) {
  if (buffer_.size() < capacity_) {
    buffer_.push_back(std::move(tr));
    return;
  }
  buffer_[head_] = std::move(tr);
  head_ = (head_ + 1) % capacity_;
}

std::vector<Transition> ReplayMemory::sample(std::size_t batch, Rng& rng) const {
  if (buffer_.empty()) throw std::invalid_argument("cannot sample from an empty replay memory");
  const std::size_t n = buffer_.size();
  std::vector<Transition> out;
  out.reserve(batch);
  if (n < batch) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t k = 0; k < batch; ++k) out.push_back(at(pick(rng)));
    return out;
  }
  // Floyd's algorithm: `batch` distinct indices in O(batch).
  std::unordered_set<std::size_t> chosen;
  std::vector<std::size_t> order;
  for (std::size_t j = n - batch; j < n; ++j) {
    std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    std::size_t pick = chosen.insert(t).second ? t : j;
    if (pick == j) chosen.insert(j);
    order.push_back(pick);
  }
  for (std::size_t i : order) out.push_back(at(i));
  return out;
}

void ReplayMemory::write(std::ostream& out) const {
  binary::write<std::uint64_t>(out, capacity_);
  binary::write<std::uint64_t>(out, buffer_.size());
  for (std::size_t i = 0; i < buffer_.size(); ++i) {
    const Transition& tr = at(i);
    write_state(out, tr.state);
    binary::write<std::int32_t>(out, tr.action);
    binary::write<double>(out, tr.reward);
    write_state(out, tr.next_state);
    binary::write<std::uint8_t>(out, tr.done ? 1 : 0);
    write_mask(out, tr.next_mask);
  }
}

ReplayMemory ReplayMemory::read(std::istream& in) {
  ReplayMemory mem(binary::read<std::uint64_t>(in));
  auto size = binary::read<std::uint64_t>(in);
  if (size > mem.capacity_) throw binary::FormatError("replay memory larger than its capacity");
  for (std::uint64_t i = 0; i < size; ++i) {
    Transition tr;
    tr.state = read_state(in);
    tr.action = binary::read<std::int32_t>(in);
    tr.reward = binary::read<double>(in);
    tr.next_state = read_state(in);
    tr.done = binary::read<std::uint8_t>(in) != 0;
    tr.next_mask = read_mask(in);
    mem.push(std::move(tr));
  }
  return mem;
}

}  // namespace cfrl
