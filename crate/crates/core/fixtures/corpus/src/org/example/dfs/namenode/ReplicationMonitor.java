package org.example.dfs.namenode;

import org.example.dfs.Block;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class ReplicationMonitor {
    private static final Logger LOG = LoggerFactory.getLogger(ReplicationMonitor.class);

    private final BlockManager blockManager;
    private final Recovery recovery;

    public ReplicationMonitor(BlockManager blockManager, Recovery recovery) {
        this.blockManager = blockManager;
        this.recovery = recovery;
    }

    public void check(Block block, int live, String node) {
        if (live < blockManager.getReplication()) {
            LOG.info("Block " + block + " is under replicated: " + live + " live replicas");
            recovery.recoverBlock(block, node);
        } else if (live > blockManager.getReplication()) {
            blockManager.invalidate(block, node);
        }
    }
}
