package org.example.dfs.datanode;

import org.example.dfs.Block;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class DataNode {
    private static final Logger LOG = LoggerFactory.getLogger(DataNode.class);

    private final FsDataset dataset;
    private final Heartbeat heartbeat;
    private boolean running;

    public DataNode(FsDataset dataset, Heartbeat heartbeat) {
        this.dataset = dataset;
        this.heartbeat = heartbeat;
    }

    public void run() {
        LOG.info("DataNode starting with storage " + dataset.getStorageDir());
        running = true;
        while (running) {
            offerService();
        }
        LOG.info("DataNode shut down");
    }

    void offerService() {
        try {
            heartbeat.send(true);
        } catch (java.io.IOException e) {
            LOG.warn("IOException in offerService: " + e.getMessage());
            running = false;
        }
    }

    public void transferBlock(Block block, String targetAddr) {
        BlockSender sender = new BlockSender(dataset);
        sender.sendBlock(block, targetAddr, false);
    }

    public void receive(Block block, String srcAddr) {
        BlockReceiver receiver = new BlockReceiver(dataset);
        receiver.receiveBlock(block, srcAddr, null);
    }
}
