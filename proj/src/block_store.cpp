#include "aulid/block_store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <string>

#include "aulid/endian.hpp"

namespace aulid {
namespace {

constexpr char kMagic[8] = {'A', 'U', 'L', 'I', 'D', 'I', 'D', 'X'};

// Header field offsets inside block 0.
constexpr std::size_t kOffMagic = 0;
constexpr std::size_t kOffVersion = 8;
constexpr std::size_t kOffBlockSize = 12;
constexpr std::size_t kOffWatermark = 16;
constexpr std::size_t kOffFreeHead = 24;
constexpr std::size_t kOffFreeCount = 32;
constexpr std::size_t kOffMetaLen = 40;

[[noreturn]] void throw_errno(const std::string& what) {
  throw IoError(what + ": " + std::strerror(errno));
}

bool valid_block_size(std::uint32_t bs) { return bs >= 512 && (bs & (bs - 1)) == 0; }

}  // namespace

BlockStore BlockStore::open(const std::filesystem::path& path, std::uint32_t block_size,
                            OpenMode mode) {
  const bool adopt = mode == OpenMode::kOpenExisting && block_size == 0;
  if (!adopt && !valid_block_size(block_size)) {
    throw Error("block size must be a power of two >= 512, got " + std::to_string(block_size));
  }
  BlockStore s;
  s.path_ = path;
  s.block_size_ = block_size;
  if (mode == OpenMode::kCreate) {
    s.fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
    if (s.fd_ < 0) throw_errno("cannot create " + path.string());
    s.grow_to(1);
    s.flush();
    return s;
  }

  s.fd_ = ::open(path.c_str(), O_RDWR);
  if (s.fd_ < 0) throw_errno("cannot open " + path.string());
  struct stat st {};
  if (::fstat(s.fd_, &st) != 0) throw_errno("fstat " + path.string());
  if (st.st_size < static_cast<off_t>(kHeaderBytes)) throw CorruptionError("index file too short");

  std::vector<std::uint8_t> head(kHeaderBytes);
  if (::pread(s.fd_, head.data(), head.size(), 0) != static_cast<ssize_t>(head.size())) {
    throw_errno("read header");
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), head.begin())) {
    throw CorruptionError("bad magic in " + path.string());
  }
  if (le::get_u32(head, kOffVersion) != kVersion) throw CorruptionError("unsupported format version");
  const std::uint32_t stored_bs = le::get_u32(head, kOffBlockSize);
  if (adopt) {
    if (!valid_block_size(stored_bs)) throw CorruptionError("bad block size in header");
    block_size = stored_bs;
    s.block_size_ = stored_bs;
  }
  if (stored_bs != block_size) {
    throw Error("block size mismatch: file has " + std::to_string(stored_bs) + ", requested " +
                std::to_string(block_size));
  }
  if (st.st_size % block_size != 0) throw CorruptionError("file has a partial trailing block");
  s.watermark_ = le::get_u64(head, kOffWatermark);
  if (s.watermark_ < 1 || s.watermark_ * block_size > static_cast<std::uint64_t>(st.st_size)) {
    throw CorruptionError("watermark beyond end of file");
  }

  Block header(block_size);
  s.raw_read(kHeaderBlock, header);
  const std::uint32_t meta_len = le::get_u32(header, kOffMetaLen);
  if (meta_len > s.metadata_capacity()) throw CorruptionError("metadata length out of range");
  s.metadata_.assign(header.begin() + kHeaderBytes, header.begin() + kHeaderBytes + meta_len);
  s.load_free_chain(le::get_u64(head, kOffFreeHead));
  if (s.free_.size() != le::get_u64(head, kOffFreeCount)) {
    throw CorruptionError("free list length mismatch");
  }
  return s;
}

BlockStore::BlockStore(BlockStore&& other) noexcept
    : fd_(other.fd_),
      path_(std::move(other.path_)),
      block_size_(other.block_size_),
      watermark_(other.watermark_),
      free_(std::move(other.free_)),
      metadata_(std::move(other.metadata_)),
      stats_(other.stats_) {
  other.fd_ = -1;
}

BlockStore& BlockStore::operator=(BlockStore&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    path_ = std::move(other.path_);
    block_size_ = other.block_size_;
    watermark_ = other.watermark_;
    free_ = std::move(other.free_);
    metadata_ = std::move(other.metadata_);
    stats_ = other.stats_;
    other.fd_ = -1;
  }
  return *this;
}

BlockStore::~BlockStore() { close(); }

void BlockStore::close() noexcept {
  if (fd_ >= 0) {
    try {
      flush();
    } catch (...) {
    }
    ::close(fd_);
    fd_ = -1;
  }
}

BlockId BlockStore::allocate() {
  if (!free_.empty()) {
    BlockId id = *free_.begin();
    free_.erase(free_.begin());
    return id;
  }
  BlockId id = watermark_;
  grow_to(watermark_ + 1);
  return id;
}

BlockId BlockStore::allocate_run(std::size_t count) {
  if (count == 0) throw Error("allocate_run of zero blocks");
  if (count == 1) return allocate();
  // Lowest free run of the requested length.
  BlockId run_start = 0;
  std::size_t run_len = 0;
  for (BlockId id : free_) {
    if (run_len > 0 && id == run_start + run_len) {
      ++run_len;
    } else {
      run_start = id;
      run_len = 1;
    }
    if (run_len == count) {
      for (std::size_t i = 0; i < count; ++i) free_.erase(run_start + i);
      return run_start;
    }
  }
  BlockId id = watermark_;
  grow_to(watermark_ + count);
  return id;
}

void BlockStore::free(BlockId id) {
  if (id == kHeaderBlock || id >= watermark_) {
    throw Error("free of unallocated block " + std::to_string(id));
  }
  if (!free_.insert(id).second) throw Error("double free of block " + std::to_string(id));
}

bool BlockStore::is_allocated(BlockId id) const {
  return id != kHeaderBlock && id < watermark_ && !free_.contains(id);
}

void BlockStore::check_live(BlockId id) const {
  if (id != kHeaderBlock && !is_allocated(id)) {
    throw Error("access to unallocated block " + std::to_string(id));
  }
}

Block BlockStore::read(BlockId id) {
  Block b(block_size_);
  read_into(id, b);
  return b;
}

void BlockStore::read_into(BlockId id, std::span<std::uint8_t> out) {
  check_live(id);
  if (out.size() != block_size_) throw Error("read buffer is not one block");
  raw_read(id, out);
  ++stats_.reads;
}

void BlockStore::write(BlockId id, std::span<const std::uint8_t> data) {
  check_live(id);
  if (data.size() != block_size_) throw Error("write of a partial block");
  raw_write(id, data);
  ++stats_.writes;
}

std::uint64_t BlockStore::file_size_bytes() const {
  return static_cast<std::uint64_t>(watermark_) * block_size_;
}

void BlockStore::set_metadata(std::span<const std::uint8_t> bytes) {
  if (bytes.size() > metadata_capacity()) throw Error("metadata does not fit in the header block");
  metadata_.assign(bytes.begin(), bytes.end());
}

void BlockStore::flush() {
  if (fd_ < 0) return;
  // The free list is written into free blocks themselves: the lowest free ids
  // become chain blocks, and they list themselves as free too.
  const std::size_t per_block = (block_size_ - 16) / 8;
  std::vector<BlockId> ids(free_.begin(), free_.end());
  const std::size_t chain_len = (ids.size() + per_block - 1) / per_block;
  Block buf(block_size_);
  for (std::size_t c = 0; c < chain_len; ++c) {
    std::fill(buf.begin(), buf.end(), 0);
    const std::size_t begin = c * per_block;
    const std::size_t end = std::min(ids.size(), begin + per_block);
    le::put_u64(buf, 0, c + 1 < chain_len ? ids[c + 1] : 0);
    le::put_u64(buf, 8, end - begin);
    for (std::size_t i = begin; i < end; ++i) le::put_u64(buf, 16 + 8 * (i - begin), ids[i]);
    raw_write(ids[c], buf);
  }

  std::fill(buf.begin(), buf.end(), 0);
  std::copy(std::begin(kMagic), std::end(kMagic), buf.begin() + kOffMagic);
  le::put_u32(buf, kOffVersion, kVersion);
  le::put_u32(buf, kOffBlockSize, block_size_);
  le::put_u64(buf, kOffWatermark, watermark_);
  le::put_u64(buf, kOffFreeHead, chain_len > 0 ? ids[0] : 0);
  le::put_u64(buf, kOffFreeCount, ids.size());
  le::put_u32(buf, kOffMetaLen, static_cast<std::uint32_t>(metadata_.size()));
  std::copy(metadata_.begin(), metadata_.end(), buf.begin() + kHeaderBytes);
  raw_write(kHeaderBlock, buf);
  if (::fsync(fd_) != 0) throw_errno("fsync");
}

void BlockStore::load_free_chain(BlockId head) {
  Block buf(block_size_);
  const std::size_t per_block = (block_size_ - 16) / 8;
  std::size_t hops = 0;
  while (head != 0) {
    if (head >= watermark_ || ++hops > watermark_) throw CorruptionError("broken free-list chain");
    raw_read(head, buf);
    const BlockId next = le::get_u64(buf, 0);
    const std::uint64_t n = le::get_u64(buf, 8);
    if (n > per_block) throw CorruptionError("free-list block overflow");
    for (std::uint64_t i = 0; i < n; ++i) {
      const BlockId id = le::get_u64(buf, 16 + 8 * i);
      if (id == kHeaderBlock || id >= watermark_) throw CorruptionError("free id out of range");
      free_.insert(id);
    }
    head = next;
  }
}

void BlockStore::raw_read(BlockId id, std::span<std::uint8_t> out) const {
  const off_t off = static_cast<off_t>(id) * block_size_;
  std::size_t done = 0;
  while (done < out.size()) {
    ssize_t n = ::pread(fd_, out.data() + done, out.size() - done, off + static_cast<off_t>(done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("pread block " + std::to_string(id));
    }
    if (n == 0) throw IoError("short read of block " + std::to_string(id));
    done += static_cast<std::size_t>(n);
  }
}

void BlockStore::raw_write(BlockId id, std::span<const std::uint8_t> data) const {
  const off_t off = static_cast<off_t>(id) * block_size_;
  std::size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::pwrite(fd_, data.data() + done, data.size() - done, off + static_cast<off_t>(done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("pwrite block " + std::to_string(id));
    }
    done += static_cast<std::size_t>(n);
  }
}

void BlockStore::grow_to(BlockId new_watermark) {
  if (::ftruncate(fd_, static_cast<off_t>(new_watermark) * block_size_) != 0) {
    throw_errno("extend " + path_.string());
  }
  watermark_ = new_watermark;
}

}  // namespace aulid
