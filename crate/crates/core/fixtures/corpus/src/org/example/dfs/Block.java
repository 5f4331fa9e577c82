package org.example.dfs;

public class Block {
    private final long blockId;
    private long numBytes;

    public Block(long blockId, long numBytes) {
        this.blockId = blockId;
        this.numBytes = numBytes;
    }

    public long getBlockId() {
        return blockId;
    }

    public long getNumBytes() {
        return numBytes;
    }

    public void setNumBytes(long n) {
        numBytes = n;
    }

    @Override
    public String toString() {
        return "blk_" + blockId;
    }
}
