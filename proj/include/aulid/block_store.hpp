#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <vector>

#include "aulid/types.hpp"

namespace aulid {

using Block = std::vector<std::uint8_t>;

struct IoStats {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  friend bool operator==(const IoStats&, const IoStats&) = default;
};

enum class OpenMode { kCreate, kOpenExisting };

/// Block-aligned index file. Every read() and write() call is counted, and
/// nothing is cached: reading the same block twice costs two reads.
///
/// Block 0 is the file header: magic, format version, block size, allocation
/// watermark, head of the persisted free-list chain, and an opaque metadata
/// region owned by whichever index lives in the file.
class BlockStore {
 public:
  static constexpr std::uint32_t kDefaultBlockSize = 4096;
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 64;

  /// With kOpenExisting, a block_size of 0 adopts the size stored in the file.
  static BlockStore open(const std::filesystem::path& path, std::uint32_t block_size,
                         OpenMode mode);

  BlockStore(BlockStore&& other) noexcept;
  BlockStore& operator=(BlockStore&& other) noexcept;
  BlockStore(const BlockStore&) = delete;
  BlockStore& operator=(const BlockStore&) = delete;
  ~BlockStore();

  /// Smallest id on the free list, else the watermark (the file grows).
  BlockId allocate();
  /// `count` consecutive ids; reuses a free run when one exists.
  BlockId allocate_run(std::size_t count);
  void free(BlockId id);

  Block read(BlockId id);
  void read_into(BlockId id, std::span<std::uint8_t> out);
  void write(BlockId id, std::span<const std::uint8_t> data);

  IoStats counters() const { return stats_; }
  void reset_counters() { stats_ = {}; }

  std::uint32_t block_size() const { return block_size_; }
  BlockId watermark() const { return watermark_; }
  std::size_t free_count() const { return free_.size(); }
  std::uint64_t file_size_bytes() const;
  bool is_allocated(BlockId id) const;
  const std::filesystem::path& path() const { return path_; }

  /// Opaque bytes persisted in block 0 after the store header.
  std::span<const std::uint8_t> metadata() const { return metadata_; }
  void set_metadata(std::span<const std::uint8_t> bytes);
  std::size_t metadata_capacity() const { return block_size_ - kHeaderBytes; }

  /// Persists header, metadata and free list. Flush I/O is not counted.
  void flush();

 private:
  BlockStore() = default;
  void close() noexcept;
  void check_live(BlockId id) const;
  void raw_read(BlockId id, std::span<std::uint8_t> out) const;
  void raw_write(BlockId id, std::span<const std::uint8_t> data) const;
  void grow_to(BlockId new_watermark);
  void load_free_chain(BlockId head);

  int fd_ = -1;
  std::filesystem::path path_;
  std::uint32_t block_size_ = kDefaultBlockSize;
  BlockId watermark_ = 1;
  std::set<BlockId> free_;
  std::vector<std::uint8_t> metadata_;
  IoStats stats_;
};

}  // namespace aulid
